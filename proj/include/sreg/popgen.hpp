#pragma once

#include "sreg/csv.hpp"
#include "sreg/rng.hpp"
#include "sreg/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sreg {

/// Superpopulation scheme: x ~ MVN(mu 1, AR(1) rho), y = x'beta + e,
/// z = r e + sqrt(1 - r^2) z*.
struct PopulationConfig {
    Index N = 1000;
    Index p = 90;
    Index s = 5;
    double mu = 2.0;
    double rho = 0.2;
    double sigma2 = 1.0;
    double r = -0.75;
    std::uint64_t seed = 1;

    void validate() const {
        if (N <= 0) throw std::invalid_argument("population size N must be positive");
        if (p <= 0) throw std::invalid_argument("auxiliary dimension p must be positive");
        if (s < 0 || s > p) throw std::invalid_argument("signal count s must lie in [0, p]");
        if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
        if (!(sigma2 >= 0.0)) throw std::invalid_argument("sigma2 must be non-negative");
        if (!(std::abs(r) <= 1.0)) throw std::invalid_argument("|r| must not exceed 1");
    }
};

struct Population {
    Matrix x;           // N x p auxiliaries
    Vector y;           // outcomes
    Vector e;           // true errors
    Vector z;           // informativeness variable
    Vector m_oracle;    // x_i' beta_true
    Vector beta_true;

    [[nodiscard]] Index size() const { return y.size(); }
    [[nodiscard]] Index dim() const { return x.cols(); }
};

/// Labels are 1-based stratum ids.
struct StrataLabels {
    std::vector<int> labels;
    std::vector<Index> sizes;

    [[nodiscard]] int count() const { return static_cast<int>(sizes.size()); }
    [[nodiscard]] Index population_size() const { return static_cast<Index>(labels.size()); }
};

/// Lower Cholesky factor of Sigma_ij = rho^|i-j|.
inline Matrix ar1_cholesky(Index p, double rho) {
    Matrix sigma(p, p);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
            sigma(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
        }
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw Error("AR(1) covariance is not positive definite");
    return llt.matrixL();
}

inline Population generate_population(const PopulationConfig& cfg) {
    cfg.validate();
    const Index N = cfg.N;
    const Index p = cfg.p;
    Rng rng = substream(cfg.seed, Stream::population);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Matrix chol = ar1_cholesky(p, cfg.rho);
    Population pop;
    pop.x.resize(N, p);
    Vector draw(p);
    for (Index i = 0; i < N; ++i) {
        for (Index j = 0; j < p; ++j) draw(j) = normal(rng);
        pop.x.row(i) = (chol * draw).transpose().array() + cfg.mu;
    }

    pop.beta_true = Vector::Zero(p);
    pop.beta_true.head(cfg.s).setOnes();

    const double sd = std::sqrt(cfg.sigma2);
    pop.e.resize(N);
    for (Index i = 0; i < N; ++i) pop.e(i) = sd * normal(rng);

    const double w = std::sqrt(std::max(0.0, 1.0 - cfg.r * cfg.r));
    pop.z.resize(N);
    for (Index i = 0; i < N; ++i) pop.z(i) = cfg.r * pop.e(i) + w * normal(rng);

    pop.m_oracle = pop.x * pop.beta_true;
    pop.y = pop.m_oracle + pop.e;
    return pop;
}

/// Sort by z (ties by unit index) and cut into H contiguous blocks whose
/// sizes differ by at most one.
inline StrataLabels assign_strata(std::span<const double> z, int H) {
    const auto N = static_cast<Index>(z.size());
    if (H < 1) throw std::invalid_argument("number of strata must be positive");
    if (H > N) throw std::invalid_argument("more strata than units");
    IndexSet order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return z[a] < z[b]; });
    StrataLabels out;
    out.labels.assign(static_cast<std::size_t>(N), 0);
    out.sizes.assign(static_cast<std::size_t>(H), N / H);
    for (Index h = 0; h < N % H; ++h) ++out.sizes[static_cast<std::size_t>(h)];
    std::size_t pos = 0;
    for (int h = 0; h < H; ++h) {
        for (Index c = 0; c < out.sizes[static_cast<std::size_t>(h)]; ++c) {
            out.labels[static_cast<std::size_t>(order[pos++])] = h + 1;
        }
    }
    return out;
}

inline StrataLabels assign_strata(const Population& pop, int H) {
    return assign_strata(std::span<const double>(pop.z.data(), static_cast<std::size_t>(pop.z.size())), H);
}

inline double population_total(std::span<const double> values) {
    return std::accumulate(values.begin(), values.end(), 0.0);
}

inline double population_total(const Vector& values) {
    return population_total(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

/// Columns: unit_id, y, z, stratum, x_1..x_p. Unit ids are 1-based.
inline void write_population_csv(const std::string& path, const Population& pop,
                                 const std::optional<StrataLabels>& strata = std::nullopt) {
    csv::Writer out(path);
    std::vector<std::string> header{"unit_id", "y", "z", "stratum"};
    for (Index j = 0; j < pop.dim(); ++j) header.push_back("x_" + std::to_string(j + 1));
    out.row(header);
    std::vector<std::string> cells;
    for (Index i = 0; i < pop.size(); ++i) {
        cells.clear();
        cells.push_back(std::to_string(i + 1));
        cells.push_back(csv::format(pop.y(i)));
        cells.push_back(csv::format(pop.z(i)));
        cells.push_back(std::to_string(strata ? strata->labels[static_cast<std::size_t>(i)] : 1));
        for (Index j = 0; j < pop.dim(); ++j) cells.push_back(csv::format(pop.x(i, j)));
        out.row(cells);
    }
}

}  // namespace sreg
