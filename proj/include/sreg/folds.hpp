#pragma once

#include "sreg/designs.hpp"
#include "sreg/rng.hpp"
#include "sreg/types.hpp"

#include <numeric>
#include <random>
#include <vector>

namespace sreg {

/// Population fold labels. Labels are 0-based fold ids in [0, K).
struct FoldAssignment {
    std::vector<int> labels;
    int K = 0;
    std::vector<Index> fold_sizes;

    [[nodiscard]] Index population_size() const { return static_cast<Index>(labels.size()); }
    [[nodiscard]] int fold_of(Index i) const { return labels[static_cast<std::size_t>(i)]; }
};

/// iid uniform labels on {0..K-1}. With `balanced`, a random permutation is
/// cut into K near-equal folds instead.
inline FoldAssignment assign_folds(Index N, int K, Rng& rng, bool balanced = false) {
    if (K < 2) throw std::invalid_argument("K must be at least 2 (K = 1 leaves an empty training set)");
    if (K > N) throw std::invalid_argument("K must not exceed the population size");
    FoldAssignment out;
    out.K = K;
    out.labels.resize(static_cast<std::size_t>(N));
    if (balanced) {
        IndexSet perm(static_cast<std::size_t>(N));
        std::iota(perm.begin(), perm.end(), Index{0});
        partial_shuffle(perm, N, rng);
        for (Index t = 0; t < N; ++t) out.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])] = static_cast<int>(t % K);
    } else {
        std::uniform_int_distribution<int> pick(0, K - 1);
        for (auto& l : out.labels) l = pick(rng);
    }
    out.fold_sizes.assign(static_cast<std::size_t>(K), 0);
    for (int l : out.labels) ++out.fold_sizes[static_cast<std::size_t>(l)];
    return out;
}

struct FoldPart {
    IndexSet units;    // U_k
    IndexSet sampled;  // A_k = A intersect U_k

    [[nodiscard]] Index N_k() const { return static_cast<Index>(units.size()); }
    [[nodiscard]] Index n_k() const { return static_cast<Index>(sampled.size()); }
};

inline std::vector<FoldPart> fold_partition(const FoldAssignment& folds, const DrawnSample& sample) {
    if (folds.population_size() != sample.population_size()) {
        throw std::invalid_argument("fold assignment and sample disagree on population size");
    }
    std::vector<FoldPart> parts(static_cast<std::size_t>(folds.K));
    for (Index i = 0; i < folds.population_size(); ++i) {
        auto& part = parts[static_cast<std::size_t>(folds.fold_of(i))];
        part.units.push_back(i);
        if (sample.contains(i)) part.sampled.push_back(i);
    }
    return parts;
}

}  // namespace sreg
