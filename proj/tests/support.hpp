#pragma once

#include "sreg/types.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using sreg::Index;
using sreg::IndexSet;

struct WeightedSample {
    IndexSet units;
    double prob = 0.0;
};

/// Every size-n subset of {0..N-1}, in lexicographic order.
inline std::vector<IndexSet> subsets(Index N, Index n) {
    std::vector<IndexSet> out;
    IndexSet cur;
    auto rec = [&](auto&& self, Index start) -> void {
        if (static_cast<Index>(cur.size()) == n) {
            out.push_back(cur);
            return;
        }
        for (Index i = start; i < N; ++i) {
            cur.push_back(i);
            self(self, i + 1);
            cur.pop_back();
        }
    };
    rec(rec, 0);
    return out;
}

inline std::vector<WeightedSample> enumerate_srswor(Index N, Index n) {
    auto all = subsets(N, n);
    std::vector<WeightedSample> out;
    for (auto& s : all) out.push_back({s, 1.0 / static_cast<double>(all.size())});
    return out;
}

/// labels are 1-based strata, n_h per stratum.
inline std::vector<WeightedSample> enumerate_stratified(const std::vector<int>& labels, const std::vector<Index>& n_h) {
    const auto N = static_cast<Index>(labels.size());
    std::vector<WeightedSample> out;
    for (Index n = 0; n <= N; ++n) {
        for (auto& s : subsets(N, n)) {
            std::vector<Index> count(n_h.size(), 0);
            for (Index i : s) ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)] - 1)];
            if (count == n_h) out.push_back({s, 0.0});
        }
    }
    for (auto& w : out) w.prob = 1.0 / static_cast<double>(out.size());
    return out;
}

/// Size-n subsets with probability proportional to prod p/(1-p).
inline std::vector<WeightedSample> enumerate_rejective(const std::vector<double>& p, Index n) {
    const auto N = static_cast<Index>(p.size());
    std::vector<WeightedSample> out;
    double total = 0.0;
    for (auto& s : subsets(N, n)) {
        double w = 1.0;
        for (Index i : s) w *= p[static_cast<std::size_t>(i)] / (1.0 - p[static_cast<std::size_t>(i)]);
        out.push_back({s, w});
        total += w;
    }
    for (auto& w : out) w.prob /= total;
    return out;
}

/// Every subset with independent-Bernoulli probability.
inline std::vector<WeightedSample> enumerate_poisson(const std::vector<double>& p) {
    const auto N = static_cast<Index>(p.size());
    std::vector<WeightedSample> out;
    for (Index n = 0; n <= N; ++n) {
        for (auto& s : subsets(N, n)) {
            double w = 1.0;
            std::vector<bool> in(static_cast<std::size_t>(N), false);
            for (Index i : s) in[static_cast<std::size_t>(i)] = true;
            for (Index i = 0; i < N; ++i) {
                const double q = p[static_cast<std::size_t>(i)];
                w *= in[static_cast<std::size_t>(i)] ? q : 1.0 - q;
            }
            out.push_back({s, w});
        }
    }
    return out;
}

inline std::vector<double> inclusion_from(const std::vector<WeightedSample>& design, Index N) {
    std::vector<double> pi(static_cast<std::size_t>(N), 0.0);
    for (const auto& s : design) {
        for (Index i : s.units) pi[static_cast<std::size_t>(i)] += s.prob;
    }
    return pi;
}

inline std::vector<std::vector<double>> joint_from(const std::vector<WeightedSample>& design, Index N) {
    std::vector<std::vector<double>> pij(static_cast<std::size_t>(N), std::vector<double>(static_cast<std::size_t>(N), 0.0));
    for (const auto& s : design) {
        for (Index i : s.units) {
            for (Index j : s.units) pij[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += s.prob;
        }
    }
    return pij;
}

inline bool rel_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("sreg-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::string str(const std::string& child = "") const {
        return child.empty() ? path_.string() : (path_ / child).string();
    }

private:
    std::filesystem::path path_;
};

}  // namespace testsupport
