#pragma once

#include "sreg/designs.hpp"
#include "sreg/popgen.hpp"
#include "sreg/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace sreg {

enum class DesignKind { stratified, rejective, srswor, poisson };

inline std::string to_string(DesignKind k) {
    switch (k) {
        case DesignKind::stratified: return "stratified";
        case DesignKind::rejective: return "rejective";
        case DesignKind::srswor: return "srswor";
        case DesignKind::poisson: return "poisson";
    }
    return "?";
}

inline DesignKind parse_design_kind(const std::string& s) {
    if (s == "stratified") return DesignKind::stratified;
    if (s == "rejective") return DesignKind::rejective;
    if (s == "srswor") return DesignKind::srswor;
    if (s == "poisson") return DesignKind::poisson;
    throw std::invalid_argument("unknown design '" + s + "' (expected stratified, rejective, srswor or poisson)");
}

/// How a design is built from a population.
struct DesignConfig {
    DesignKind kind = DesignKind::stratified;
    Index n = 300;
    int strata = 4;                                       // stratified: H equal-size strata sorted by z
    std::vector<double> fractions{0.15, 0.20, 0.30, 0.35};  // stratified: share of n per stratum
    bool exact_rejective_pi = false;  // weight rejective samples by exact conditional pi instead of p_bern
    JointMode rejective_joint = JointMode::approximate;
    double probability_cap = 1.0 - 1e-6;
    std::size_t max_attempts = 1'000'000;
};

/// Largest-remainder apportionment of n over the given shares.
inline std::vector<Index> apportion(Index n, const std::vector<double>& shares) {
    const double total = std::accumulate(shares.begin(), shares.end(), 0.0);
    if (!(total > 0.0)) throw std::invalid_argument("stratum fractions must have a positive sum");
    std::vector<Index> out(shares.size());
    std::vector<std::pair<double, std::size_t>> rem;
    Index used = 0;
    for (std::size_t h = 0; h < shares.size(); ++h) {
        const double exact = static_cast<double>(n) * shares[h] / total;
        out[h] = static_cast<Index>(std::floor(exact + 1e-9));
        used += out[h];
        rem.emplace_back(exact - static_cast<double>(out[h]), h);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t t = 0; used < n; ++t, ++used) ++out[rem[t % rem.size()].second];
    return out;
}

struct ScaledProbabilities {
    Vector pi;
    std::size_t capped = 0;  // units held at the cap
};

/// pi_i proportional to size_i, scaled so sum pi = n. Units that would
/// reach the cap are fixed at the cap and the rest rescaled until none do.
inline ScaledProbabilities scale_to_sample_size(const Vector& size, Index n, double cap) {
    const Index N = size.size();
    if (n <= 0 || n >= N) throw std::invalid_argument("sample size must lie strictly between 0 and N");
    if (static_cast<double>(n) > cap * static_cast<double>(N)) throw std::invalid_argument("cap too small for n");
    std::vector<bool> fixed(static_cast<std::size_t>(N), false);
    ScaledProbabilities out;
    out.pi = Vector::Zero(N);
    while (true) {
        double free_size = 0.0;
        Index nfixed = 0;
        for (Index i = 0; i < N; ++i) {
            if (fixed[static_cast<std::size_t>(i)]) ++nfixed;
            else free_size += size(i);
        }
        const double target = static_cast<double>(n) - cap * static_cast<double>(nfixed);
        bool changed = false;
        for (Index i = 0; i < N; ++i) {
            if (fixed[static_cast<std::size_t>(i)]) {
                out.pi(i) = cap;
                continue;
            }
            out.pi(i) = size(i) * target / free_size;
            if (out.pi(i) >= cap) {
                fixed[static_cast<std::size_t>(i)] = true;
                changed = true;
            }
        }
        if (!changed) {
            out.capped = static_cast<std::size_t>(nfixed);
            return out;
        }
    }
}

/// pi proportional to 1 / (1 + exp(-z)), scaled to sum to n.
inline ScaledProbabilities logistic_size_probabilities(const Vector& z, Index n, double cap) {
    const Vector size = (1.0 + (-z.array()).exp()).inverse();
    return scale_to_sample_size(size, n, cap);
}

/// A design plus the weights and joint probabilities the estimators use.
struct Scenario {
    DesignSpec design;
    Vector weights;  // pi used in the estimators
    JointProbs joint;
    std::size_t capped_units = 0;
};

inline Scenario build_scenario(const DesignConfig& cfg, const Population& pop) {
    const Index N = pop.size();
    if (cfg.n <= 0 || cfg.n > N) throw std::invalid_argument("sample size n must lie in [1, N]");
    switch (cfg.kind) {
        case DesignKind::stratified: {
            StratifiedDesign d{assign_strata(pop, cfg.strata), {}};
            if (static_cast<int>(cfg.fractions.size()) != cfg.strata) {
                throw std::invalid_argument("need one stratum fraction per stratum");
            }
            d.n_h = apportion(cfg.n, cfg.fractions);
            DesignSpec spec = d;
            Vector w = first_order_probs(spec);
            JointProbs j = joint_probs(spec);
            return {std::move(spec), std::move(w), std::move(j), 0};
        }
        case DesignKind::srswor: {
            DesignSpec spec = SrsworDesign{N, cfg.n};
            Vector w = first_order_probs(spec);
            JointProbs j = joint_probs(spec);
            return {std::move(spec), std::move(w), std::move(j), 0};
        }
        case DesignKind::poisson: {
            auto scaled = logistic_size_probabilities(pop.z, cfg.n, cfg.probability_cap);
            DesignSpec spec = PoissonDesign{scaled.pi};
            JointProbs j = JointProbs::independent(scaled.pi);
            return {std::move(spec), std::move(scaled.pi), std::move(j), scaled.capped};
        }
        case DesignKind::rejective: {
            auto scaled = logistic_size_probabilities(pop.z, cfg.n, cfg.probability_cap);
            RejectiveDesign d{scaled.pi, cfg.n, cfg.max_attempts};
            DesignSpec spec = d;
            Vector w = cfg.exact_rejective_pi ? first_order_probs(spec) : scaled.pi;
            JointProbs j = cfg.rejective_joint == JointMode::exact ? joint_probs(spec, JointMode::exact)
                                                                  : JointProbs::hajek(w);
            return {std::move(spec), std::move(w), std::move(j), scaled.capped};
        }
    }
    throw std::logic_error("unhandled design kind");
}

}  // namespace sreg
