#pragma once

#include "sreg/designs.hpp"
#include "sreg/folds.hpp"
#include "sreg/regfit.hpp"
#include "sreg/rng.hpp"
#include "sreg/types.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace sreg {

struct ConfidenceInterval {
    double low = 0.0;
    double high = 0.0;
    bool degenerate = false;  // zero or negative variance
};

/// point +- z_{(1+level)/2} sqrt(variance).
inline ConfidenceInterval confidence_interval(double point, double variance, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
    if (!(variance > 0.0)) return {point, point, true};
    const boost::math::normal_distribution<double> std_normal;
    const double z = boost::math::quantile(std_normal, 0.5 * (1.0 + level));
    const double half = z * std::sqrt(variance);
    return {point - half, point + half, false};
}

/// Per-fold state of a cross-fitted estimate, reused by the variance
/// estimator and the diagnostics.
struct SregInternals {
    FoldAssignment folds;
    std::vector<FitResult> fold_fits;  // beta_hat^(-k)
    Vector oof_prediction;             // m_hat_i^(-k(i)) for every unit
    Vector fold_totals;                // T_hat_k
};

struct EstimateReport {
    std::string estimator;
    double point = 0.0;
    std::optional<double> variance;
    std::optional<ConfidenceInterval> ci;
    bool variance_degenerate = false;
    /// Residuals aligned with sample.indices (the values the HT variance
    /// formula is applied to).
    Vector residuals;
    std::optional<SregInternals> internals;
};

namespace detail {

inline void check_sample_inputs(const DrawnSample& sample, const Vector& pi, const Vector& y_sampled) {
    if (pi.size() != sample.population_size()) {
        throw std::invalid_argument("inclusion probabilities must have one entry per population unit");
    }
    if (y_sampled.size() != sample.n_realized()) {
        throw std::invalid_argument("sampled outcomes must align with the sample indices");
    }
    for (Index i : sample.indices) {
        if (!(pi(i) > 0.0)) {
            throw Error("inclusion probability of sampled unit " + std::to_string(i) + " is not positive");
        }
    }
}

inline double ht_sum(const DrawnSample& sample, const Vector& pi, const Vector& values_sampled) {
    double acc = 0.0;
    for (std::size_t t = 0; t < sample.indices.size(); ++t) {
        acc += values_sampled(static_cast<Index>(t)) / pi(sample.indices[t]);
    }
    return acc;
}

}  // namespace detail

/// sum_{i in A} y_i / pi_i
inline EstimateReport ht_total(const DrawnSample& sample, const Vector& pi, const Vector& y_sampled) {
    detail::check_sample_inputs(sample, pi, y_sampled);
    EstimateReport r;
    r.estimator = "HT";
    r.point = detail::ht_sum(sample, pi, y_sampled);
    r.residuals = y_sampled;
    return r;
}

/// sum_U m_i + sum_A (y_i - m_i) / pi_i with the true mean function.
inline EstimateReport diff_oracle(const Vector& m_oracle, const DrawnSample& sample, const Vector& pi,
                                  const Vector& y_sampled) {
    detail::check_sample_inputs(sample, pi, y_sampled);
    if (m_oracle.size() != sample.population_size()) throw std::invalid_argument("oracle mean has wrong length");
    EstimateReport r;
    r.estimator = "Diff";
    r.residuals = y_sampled - m_oracle(sample.indices);
    r.point = m_oracle.sum() + detail::ht_sum(sample, pi, r.residuals);
    return r;
}

/// Ordinary model-assisted estimator: one fit on every sampled unit, then
/// sum_U m_hat_i + sum_A (y_i - m_hat_i) / pi_i.
inline EstimateReport greg(const Matrix& pop_x, const DrawnSample& sample, const Vector& pi, const Vector& y_sampled,
                           const FitSpec& spec, Rng& rng) {
    detail::check_sample_inputs(sample, pi, y_sampled);
    if (sample.n_realized() < 1) throw Error("GREG needs at least one sampled unit");
    FitResult fit = fit_model(pop_x(sample.indices, Eigen::all), y_sampled, spec, rng,
                              std::optional<Vector>(pi(sample.indices)));
    fit.training_indices = sample.indices;
    const Vector m_hat = predict(fit, pop_x);
    EstimateReport r;
    r.estimator = "GREG";
    r.residuals = y_sampled - m_hat(sample.indices);
    r.point = m_hat.sum() + detail::ht_sum(sample, pi, r.residuals);
    return r;
}

/// K-fold sample-split estimator: fold k's predictions come from a fit on
/// A minus A_k only, and T_hat = sum_k [sum_{U_k} m_hat + sum_{A_k} (y - m_hat)/pi].
inline EstimateReport sreg(const Matrix& pop_x, const DrawnSample& sample, const Vector& pi, const Vector& y_sampled,
                           const FitSpec& spec, const FoldAssignment& folds, Rng& rng) {
    detail::check_sample_inputs(sample, pi, y_sampled);
    const Index N = sample.population_size();
    if (folds.population_size() != N) throw std::invalid_argument("fold assignment has wrong population size");
    if (pop_x.rows() != N) throw std::invalid_argument("auxiliary matrix has wrong row count");

    std::vector<Index> position(static_cast<std::size_t>(N), -1);
    for (std::size_t t = 0; t < sample.indices.size(); ++t) position[static_cast<std::size_t>(sample.indices[t])] = static_cast<Index>(t);

    const auto parts = fold_partition(folds, sample);
    SregInternals st;
    st.folds = folds;
    st.oof_prediction = Vector::Zero(N);
    st.fold_totals = Vector::Zero(folds.K);
    st.fold_fits.reserve(static_cast<std::size_t>(folds.K));

    EstimateReport r;
    r.estimator = "SREG";
    r.residuals = Vector::Zero(sample.n_realized());

    for (int k = 0; k < folds.K; ++k) {
        const auto& part = parts[static_cast<std::size_t>(k)];
        IndexSet train;
        train.reserve(sample.indices.size());
        for (Index i : sample.indices) {
            if (folds.fold_of(i) != k) train.push_back(i);
        }
        if (train.empty()) {
            throw Error("fold " + std::to_string(k + 1) + " has no sampled training units outside it; use a smaller K");
        }
        // Honesty: no outcome from A_k may enter fold k's training rows.
        for (Index i : part.sampled) {
            if (std::binary_search(train.begin(), train.end(), i)) {
                throw std::logic_error("cross-fitting violated: unit " + std::to_string(i) + " trains its own fold");
            }
        }
        IndexSet train_pos(train.size());
        for (std::size_t t = 0; t < train.size(); ++t) train_pos[t] = position[static_cast<std::size_t>(train[t])];

        Rng fold_rng = spawn(rng);
        FitResult fit = fit_model(pop_x(train, Eigen::all), y_sampled(train_pos), spec, fold_rng,
                                  std::optional<Vector>(pi(train)));
        fit.training_indices = std::move(train);

        const Vector m_hat = predict(fit, pop_x(part.units, Eigen::all));
        double total = m_hat.sum();
        for (std::size_t u = 0; u < part.units.size(); ++u) st.oof_prediction(part.units[u]) = m_hat(static_cast<Index>(u));
        for (Index i : part.sampled) {
            const Index t = position[static_cast<std::size_t>(i)];
            const double resid = y_sampled(t) - st.oof_prediction(i);
            r.residuals(t) = resid;
            total += resid / pi(i);
        }
        st.fold_totals(k) = total;
        st.fold_fits.push_back(std::move(fit));
    }
    r.point = st.fold_totals.sum();
    r.internals = std::move(st);
    return r;
}

/// sum_{i,j in A} (pi_ij - pi_i pi_j) / pi_ij * (a_i / pi_i)(a_j / pi_j)
inline double ht_variance_general(const Vector& a_sampled, const DrawnSample& sample, const Vector& pi,
                                  const JointProbs& joint) {
    detail::check_sample_inputs(sample, pi, a_sampled);
    const auto& idx = sample.indices;
    const auto n = static_cast<Index>(idx.size());
    Vector u(n);
    for (Index t = 0; t < n; ++t) u(t) = a_sampled(t) / pi(idx[static_cast<std::size_t>(t)]);
    double acc = 0.0;
    for (Index s = 0; s < n; ++s) {
        const Index i = idx[static_cast<std::size_t>(s)];
        acc += (1.0 - pi(i)) * u(s) * u(s);
        double row = 0.0;
        for (Index t = s + 1; t < n; ++t) {
            const Index j = idx[static_cast<std::size_t>(t)];
            const double pij = joint(i, j);
            if (!(pij > 0.0)) {
                throw Error("joint inclusion probability of sampled units " + std::to_string(i) + " and " +
                            std::to_string(j) + " is zero; variance estimation requires positive second-order "
                            "inclusion probabilities");
            }
            row += (pij - pi(i) * pi(j)) / pij * u(t);
        }
        acc += 2.0 * u(s) * row;
    }
    return acc;
}

/// HT variance formula applied to the cached cross-fitted residuals.
inline double sreg_variance(const EstimateReport& report, const DrawnSample& sample, const Vector& pi,
                            const JointProbs& joint) {
    if (!report.internals) throw std::invalid_argument("sreg_variance needs a report produced by sreg()");
    return ht_variance_general(report.residuals, sample, pi, joint);
}

/// Attach a variance and (when positive) a normal CI to a report.
inline void attach_variance(EstimateReport& report, double variance, double level = 0.95) {
    report.variance = variance;
    report.variance_degenerate = !(variance > 0.0);
    if (variance >= 0.0) {
        report.ci = confidence_interval(report.point, variance, level);
    } else {
        report.ci.reset();
    }
}

}  // namespace sreg
