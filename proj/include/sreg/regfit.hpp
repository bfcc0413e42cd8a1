#pragma once

#include "sreg/designs.hpp"
#include "sreg/popgen.hpp"
#include "sreg/rng.hpp"
#include "sreg/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace sreg {

enum class FitMethod { ols, lasso };
enum class Weighting { unweighted, inverse_probability };

struct FixedLambda {
    double lambda = 0.0;
};

/// lambda picked by K-fold CV over a log grid from lambda_max down to
/// lambda_max * min_ratio; the minimum-CV-error point wins.
struct CrossValidatedLambda {
    int folds = 10;
    int grid_size = 100;
    double min_ratio = 1e-4;
};

using LambdaRule = std::variant<FixedLambda, CrossValidatedLambda>;

struct FitSpec {
    FitMethod method = FitMethod::ols;
    Weighting weighting = Weighting::unweighted;
    LambdaRule lambda_rule = CrossValidatedLambda{};
    bool standardize = true;
    bool intercept = true;
    int max_sweeps = 10000;
    double tolerance = 1e-7;

    static FitSpec ols() { return {}; }
    static FitSpec lasso_cv() {
        FitSpec s;
        s.method = FitMethod::lasso;
        return s;
    }
    static FitSpec lasso_fixed(double lambda) {
        FitSpec s;
        s.method = FitMethod::lasso;
        s.lambda_rule = FixedLambda{lambda};
        return s;
    }
};

struct FitResult {
    double intercept = 0.0;
    Vector slopes;
    FitMethod method = FitMethod::ols;
    IndexSet training_indices;
    std::optional<double> lambda;
    std::vector<double> cv_lambdas;
    std::vector<double> cv_errors;
    int sweeps = 0;

    /// (intercept, slopes...)
    [[nodiscard]] Vector beta_hat() const {
        Vector b(slopes.size() + 1);
        b(0) = intercept;
        b.tail(slopes.size()) = slopes;
        return b;
    }

    [[nodiscard]] Index dim() const { return slopes.size(); }
};

inline Vector predict(const FitResult& fit, const Matrix& x_rows) {
    if (x_rows.cols() != fit.slopes.size()) {
        throw std::invalid_argument("predict: design has " + std::to_string(x_rows.cols()) +
                                    " columns, fit has " + std::to_string(fit.slopes.size()));
    }
    Vector out = x_rows * fit.slopes;
    out.array() += fit.intercept;
    return out;
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

namespace detail {

inline Vector normalized_weights(Index n, const std::optional<Vector>& weights) {
    if (!weights) return Vector::Constant(n, 1.0 / static_cast<double>(n));
    if (weights->size() != n) throw std::invalid_argument("weights length must match the number of rows");
    if ((weights->array() <= 0.0).any()) throw std::invalid_argument("weights must be positive");
    return *weights / weights->sum();
}

}  // namespace detail

/// Minimises sum w_i (y_i - b0 - x_i'b)^2. Rank-deficient or underdetermined
/// systems get the minimum-norm slopes (intercept unpenalised).
inline FitResult fit_ols(const Matrix& x, const Vector& y, const std::optional<Vector>& weights = std::nullopt,
                         bool intercept = true) {
    const Index n = x.rows();
    if (n < 1) throw std::invalid_argument("fit_ols needs at least one row");
    if (y.size() != n) throw std::invalid_argument("fit_ols: x and y row counts differ");
    const Vector w = detail::normalized_weights(n, weights);

    FitResult fit;
    fit.method = FitMethod::ols;
    Matrix xc = x;
    Vector yc = y;
    Eigen::RowVectorXd xbar = Eigen::RowVectorXd::Zero(x.cols());
    double ybar = 0.0;
    if (intercept) {
        xbar = w.transpose() * x;
        ybar = w.dot(y);
        xc.rowwise() -= xbar;
        yc.array() -= ybar;
    }
    const Vector sw = w.array().sqrt();
    xc = sw.asDiagonal() * xc;
    yc = sw.asDiagonal() * yc;
    if (x.cols() > 0) {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xc);
        fit.slopes = cod.solve(yc);
    } else {
        fit.slopes = Vector(0);
    }
    fit.intercept = intercept ? ybar - xbar.dot(fit.slopes) : 0.0;
    return fit;
}

// ---------------------------------------------------------------------------
// Lasso
// ---------------------------------------------------------------------------

/// Covariance-form lasso problem on centred (optionally scaled) columns:
/// minimise 1/2 sum w_i (y_i - x_i'b)^2 + lambda |b|_1 with sum w = 1.
class LassoProblem {
public:
    LassoProblem(const Matrix& x, const Vector& y, const Vector& w, bool standardize) {
        const Index p = x.cols();
        xbar_ = w.transpose() * x;
        ybar_ = w.dot(y);
        scale_ = Vector::Ones(p);
        Matrix xc = x.rowwise() - xbar_;
        if (standardize) {
            for (Index j = 0; j < p; ++j) {
                const double v = w.dot(xc.col(j).cwiseAbs2());
                scale_(j) = v > 0.0 ? std::sqrt(v) : 0.0;
                if (scale_(j) > 0.0) xc.col(j) /= scale_(j);
            }
        }
        const Matrix xw = w.asDiagonal() * xc;
        gram_ = xw.transpose() * xc;
        cov_ = xw.transpose() * (y.array() - ybar_).matrix();
        yy_ = w.dot((y.array() - ybar_).square().matrix());
        usable_.resize(static_cast<std::size_t>(p));
        for (Index j = 0; j < p; ++j) usable_[static_cast<std::size_t>(j)] = gram_(j, j) > 1e-14;
    }

    [[nodiscard]] Index dim() const { return cov_.size(); }
    [[nodiscard]] const Matrix& gram() const { return gram_; }
    [[nodiscard]] const Vector& cov() const { return cov_; }

    [[nodiscard]] double lambda_max() const {
        double mx = 0.0;
        for (Index j = 0; j < dim(); ++j) {
            if (usable_[static_cast<std::size_t>(j)]) mx = std::max(mx, std::abs(cov_(j)));
        }
        return mx;
    }

    /// Value of the penalised objective at coefficients b (problem scale).
    [[nodiscard]] double objective(const Vector& b, double lambda) const {
        return 0.5 * (yy_ - 2.0 * cov_.dot(b) + b.dot(gram_ * b)) + lambda * b.lpNorm<1>();
    }

    /// Gradient of the smooth part, negated: c - G b.
    [[nodiscard]] Vector residual_correlation(const Vector& b) const { return cov_ - gram_ * b; }

    /// One coordinate sweep over all (or only active) coordinates.
    /// Updates b and grad = c - G b in place, returns the max |delta b_j|.
    double sweep(Vector& b, Vector& grad, double lambda, bool active_only) const {
        double max_change = 0.0;
        for (Index j = 0; j < dim(); ++j) {
            if (!usable_[static_cast<std::size_t>(j)]) continue;
            if (active_only && b(j) == 0.0) continue;
            const double gjj = gram_(j, j);
            const double z = grad(j) + gjj * b(j);
            const double updated = soft_threshold(z, lambda) / gjj;
            const double delta = updated - b(j);
            if (delta != 0.0) {
                grad.noalias() -= gram_.col(j) * delta;
                b(j) = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        return max_change;
    }

    /// Coordinate descent to convergence from the warm start in b.
    /// Returns the number of sweeps used.
    int solve(Vector& b, double lambda, double tol, int max_sweeps) const {
        Vector grad = residual_correlation(b);
        int sweeps = 0;
        while (true) {
            if (sweeps >= max_sweeps) {
                throw ConvergenceError("lasso coordinate descent did not converge in " +
                                       std::to_string(max_sweeps) + " sweeps (lambda = " +
                                       std::to_string(lambda) + ")");
            }
            const double full = sweep(b, grad, lambda, false);
            ++sweeps;
            if (full < tol) return sweeps;
            while (true) {
                if (sweeps >= max_sweeps) {
                    throw ConvergenceError("lasso coordinate descent did not converge in " +
                                           std::to_string(max_sweeps) + " sweeps (lambda = " +
                                           std::to_string(lambda) + ")");
                }
                const double change = sweep(b, grad, lambda, true);
                ++sweeps;
                if (change < tol) break;
            }
        }
    }

    /// Back-transform problem-scale coefficients to the original columns.
    [[nodiscard]] FitResult to_fit(const Vector& b, bool intercept) const {
        FitResult fit;
        fit.method = FitMethod::lasso;
        fit.slopes = Vector::Zero(dim());
        for (Index j = 0; j < dim(); ++j) {
            if (scale_(j) > 0.0) fit.slopes(j) = b(j) / scale_(j);
        }
        fit.intercept = intercept ? ybar_ - xbar_.dot(fit.slopes) : 0.0;
        return fit;
    }

    static double soft_threshold(double z, double lambda) {
        if (z > lambda) return z - lambda;
        if (z < -lambda) return z + lambda;
        return 0.0;
    }

private:
    Eigen::RowVectorXd xbar_;
    double ybar_ = 0.0;
    Vector scale_;
    Matrix gram_;
    Vector cov_;
    double yy_ = 0.0;
    std::vector<bool> usable_;
};

inline std::vector<double> lambda_grid(double lambda_max, int size, double min_ratio) {
    std::vector<double> grid(static_cast<std::size_t>(std::max(size, 1)));
    if (size <= 1) {
        grid[0] = lambda_max;
        return grid;
    }
    for (int k = 0; k < size; ++k) {
        grid[static_cast<std::size_t>(k)] =
            lambda_max * std::pow(min_ratio, static_cast<double>(k) / static_cast<double>(size - 1));
    }
    return grid;
}

/// Largest KKT violation of a lasso fit, measured on the problem scale.
inline double lasso_kkt_residual(const Matrix& x, const Vector& y, const FitResult& fit, double lambda,
                                 bool standardize = true, const std::optional<Vector>& weights = std::nullopt) {
    const Vector w = detail::normalized_weights(x.rows(), weights);
    LassoProblem prob(x, y, w, standardize);
    Vector b(x.cols());
    // Recover problem-scale coefficients from the back-transformed slopes.
    for (Index j = 0; j < x.cols(); ++j) {
        if (standardize) {
            Vector col = x.col(j).array() - w.dot(x.col(j));
            b(j) = fit.slopes(j) * std::sqrt(w.dot(col.cwiseAbs2()));
        } else {
            b(j) = fit.slopes(j);
        }
    }
    const Vector g = prob.residual_correlation(b);
    double worst = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
        if (prob.gram()(j, j) <= 1e-14) continue;
        const double v = b(j) != 0.0 ? std::abs(g(j) - lambda * (b(j) > 0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(g(j)) - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

namespace detail {

inline Matrix take_rows(const Matrix& x, const IndexSet& rows) { return x(rows, Eigen::all); }
inline Vector take_rows(const Vector& v, const IndexSet& rows) { return v(rows); }

}  // namespace detail

/// Lasso by covariance-update coordinate descent with active-set cycling.
/// The CV rule only ever looks at the rows it is given.
inline FitResult fit_lasso(const Matrix& x, const Vector& y, const FitSpec& spec, Rng& rng,
                           const std::optional<Vector>& weights = std::nullopt) {
    const Index n = x.rows();
    if (n < 1) throw std::invalid_argument("fit_lasso needs at least one row");
    if (y.size() != n) throw std::invalid_argument("fit_lasso: x and y row counts differ");
    const Vector w = detail::normalized_weights(n, weights);
    const LassoProblem full(x, y, w, spec.standardize);

    if (const auto* fixed = std::get_if<FixedLambda>(&spec.lambda_rule)) {
        if (!(fixed->lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
        Vector b = Vector::Zero(x.cols());
        const int sweeps = full.solve(b, fixed->lambda, spec.tolerance, spec.max_sweeps);
        FitResult fit = full.to_fit(b, spec.intercept);
        fit.lambda = fixed->lambda;
        fit.sweeps = sweeps;
        return fit;
    }

    const auto& cv = std::get<CrossValidatedLambda>(spec.lambda_rule);
    if (n < 2) throw std::invalid_argument("cross-validated lasso needs at least two rows");
    const double lmax = full.lambda_max();
    const auto grid = lambda_grid(lmax, cv.grid_size, cv.min_ratio);
    const int nfolds = std::min<int>(cv.folds, static_cast<int>(n));

    IndexSet perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    partial_shuffle(perm, n, rng);
    std::vector<int> cv_fold(static_cast<std::size_t>(n));
    for (Index t = 0; t < n; ++t) cv_fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])] = static_cast<int>(t % nfolds);

    std::vector<double> sse(grid.size(), 0.0);
    double total_weight = 0.0;
    const Vector raw_w = weights ? *weights : Vector::Ones(n);
    for (int f = 0; f < nfolds; ++f) {
        IndexSet train, held;
        for (Index i = 0; i < n; ++i) (cv_fold[static_cast<std::size_t>(i)] == f ? held : train).push_back(i);
        const Matrix xt = detail::take_rows(x, train);
        const Vector yt = detail::take_rows(y, train);
        const Vector wt = detail::normalized_weights(static_cast<Index>(train.size()),
                                                     weights ? std::optional<Vector>(detail::take_rows(*weights, train))
                                                             : std::nullopt);
        const Matrix xh = detail::take_rows(x, held);
        const Vector yh = detail::take_rows(y, held);
        const Vector wh = detail::take_rows(raw_w, held);
        total_weight += wh.sum();
        const LassoProblem prob(xt, yt, wt, spec.standardize);
        Vector b = Vector::Zero(x.cols());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            prob.solve(b, grid[g], spec.tolerance, spec.max_sweeps);
            const FitResult f_g = prob.to_fit(b, spec.intercept);
            const Vector resid = yh - predict(f_g, xh);
            sse[g] += wh.dot(resid.cwiseAbs2());
        }
    }

    std::size_t best = 0;
    std::vector<double> cv_err(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        cv_err[g] = sse[g] / total_weight;
        if (cv_err[g] < cv_err[best]) best = g;
    }

    Vector b = Vector::Zero(x.cols());
    int sweeps = 0;
    for (std::size_t g = 0; g <= best; ++g) sweeps += full.solve(b, grid[g], spec.tolerance, spec.max_sweeps);
    FitResult fit = full.to_fit(b, spec.intercept);
    fit.lambda = grid[best];
    fit.cv_lambdas = grid;
    fit.cv_errors = std::move(cv_err);
    fit.sweeps = sweeps;
    return fit;
}

/// Dispatch on spec.method. `pi` (length n, aligned with rows) is only
/// consulted for inverse-probability weighting.
inline FitResult fit_model(const Matrix& x, const Vector& y, const FitSpec& spec, Rng& rng,
                           const std::optional<Vector>& pi = std::nullopt) {
    std::optional<Vector> weights;
    if (spec.weighting == Weighting::inverse_probability) {
        if (!pi) throw std::invalid_argument("inverse-probability weighting needs inclusion probabilities");
        weights = pi->cwiseInverse();
    }
    if (spec.method == FitMethod::ols) return fit_ols(x, y, weights, spec.intercept);
    return fit_lasso(x, y, spec, rng, weights);
}

/// Root-mean-square of (m_hat - m) over an index set of the population.
inline double prediction_norm_error(const FitResult& fit, const Population& pop, const IndexSet& index_set) {
    if (index_set.empty()) throw std::invalid_argument("prediction_norm_error: empty index set");
    const Vector pred = predict(fit, detail::take_rows(pop.x, index_set));
    const Vector truth = detail::take_rows(pop.m_oracle, index_set);
    return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(index_set.size()));
}

}  // namespace sreg
