#pragma once

#include "sreg/designs.hpp"
#include "sreg/estimators.hpp"
#include "sreg/folds.hpp"
#include "sreg/popgen.hpp"
#include "sreg/regfit.hpp"
#include "sreg/rng.hpp"
#include "sreg/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sreg {

// ---------------------------------------------------------------------------
// Remainder
// ---------------------------------------------------------------------------

struct RemainderReport {
    double total = 0.0;
    Vector per_fold;  // R_{N,k}
};

/// R_{N,k} = sum_{U_k} (1 - I_i / pi_i)(m_hat_i^(-k) - m_i); R_N = sum_k R_{N,k}.
inline RemainderReport remainder(const SregInternals& internals, const Vector& m_oracle, const DrawnSample& sample,
                                 const Vector& pi) {
    const Index N = sample.population_size();
    if (m_oracle.size() != N || pi.size() != N || internals.oof_prediction.size() != N) {
        throw std::invalid_argument("remainder: inputs disagree on population size");
    }
    RemainderReport out;
    out.per_fold = Vector::Zero(internals.folds.K);
    for (Index i = 0; i < N; ++i) {
        const double weight = 1.0 - (sample.contains(i) ? 1.0 / pi(i) : 0.0);
        out.per_fold(internals.folds.fold_of(i)) += weight * (internals.oof_prediction(i) - m_oracle(i));
    }
    out.total = out.per_fold.sum();
    return out;
}

// ---------------------------------------------------------------------------
// Closed-form conditional multipliers
// ---------------------------------------------------------------------------

/// SRSWOR bound on E(D_k^2 | G_k) / mean(a^2):
/// {n_k N_k / (N_k - 1) + (n_k - pi N_k)^2} / (pi^2 N_k^2).
inline double srs_multiplier(Index N_k, Index n_k, double pi) {
    if (N_k < 2) throw std::invalid_argument("srs_multiplier needs N_k >= 2");
    if (!(pi > 0.0)) throw std::invalid_argument("srs_multiplier needs pi > 0");
    const double Nk = static_cast<double>(N_k), nk = static_cast<double>(n_k);
    const double gap = nk - pi * Nk;
    return (nk * Nk / (Nk - 1.0) + gap * gap) / (pi * pi * Nk * Nk);
}

struct StratifiedMultiplier {
    double V = 0.0;  // sum_h n_hk / {pi_h^2 (N_hk - 1)}
    double B = 0.0;  // sum_h (n_hk - pi_h N_hk)^2 / (pi_h^2 N_hk)
    Index N_k = 0;

    [[nodiscard]] double multiplier() const { return (V + B) / static_cast<double>(N_k); }
};

inline StratifiedMultiplier stratified_multiplier(std::span<const Index> N_hk, std::span<const Index> n_hk,
                                                  std::span<const double> pi_h) {
    if (N_hk.size() != n_hk.size() || N_hk.size() != pi_h.size()) {
        throw std::invalid_argument("stratified_multiplier: per-stratum inputs differ in length");
    }
    StratifiedMultiplier m;
    for (std::size_t h = 0; h < N_hk.size(); ++h) {
        if (N_hk[h] < 2) throw std::invalid_argument("stratified_multiplier needs N_hk >= 2 in every stratum");
        const double Nhk = static_cast<double>(N_hk[h]), nhk = static_cast<double>(n_hk[h]);
        const double p2 = pi_h[h] * pi_h[h];
        const double gap = nhk - pi_h[h] * Nhk;
        m.V += nhk / (p2 * (Nhk - 1.0));
        m.B += gap * gap / (p2 * Nhk);
        m.N_k += N_hk[h];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Conditional redraws given G_k
// ---------------------------------------------------------------------------

/// Redraw the indicators of fold units conditionally on everything outside
/// the fold: SRSWOR keeps n_k, stratified keeps every n_hk, rejective is a
/// size-n_k conditional Poisson draw on U_k with the original odds, Poisson
/// is independent Bernoulli. Output is aligned with part.units.
inline std::vector<std::uint8_t> redraw_fold(const DesignSpec& design, const FoldPart& part, Rng& rng) {
    const auto Nk = part.units.size();
    std::vector<std::uint8_t> out(Nk, 0);
    std::visit(
        [&](const auto& d) {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PoissonDesign>) {
                std::uniform_real_distribution<double> unif(0.0, 1.0);
                for (std::size_t u = 0; u < Nk; ++u) out[u] = unif(rng) < d.pi(part.units[u]) ? 1 : 0;
            } else if constexpr (std::is_same_v<D, SrsworDesign>) {
                IndexSet slots(Nk);
                std::iota(slots.begin(), slots.end(), Index{0});
                partial_shuffle(slots, part.n_k(), rng);
                for (Index t = 0; t < part.n_k(); ++t) out[static_cast<std::size_t>(slots[static_cast<std::size_t>(t)])] = 1;
            } else if constexpr (std::is_same_v<D, StratifiedDesign>) {
                const auto H = d.n_h.size();
                std::vector<IndexSet> slots(H);
                std::vector<Index> n_hk(H, 0);
                for (std::size_t u = 0; u < Nk; ++u) {
                    const auto h = static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(part.units[u])] - 1);
                    slots[h].push_back(static_cast<Index>(u));
                }
                for (Index i : part.sampled) ++n_hk[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1)];
                for (std::size_t h = 0; h < H; ++h) {
                    partial_shuffle(slots[h], n_hk[h], rng);
                    for (Index t = 0; t < n_hk[h]; ++t) out[static_cast<std::size_t>(slots[h][static_cast<std::size_t>(t)])] = 1;
                }
            } else {
                std::vector<double> odds(Nk);
                for (std::size_t u = 0; u < Nk; ++u) {
                    const double p = d.p_bern(part.units[u]);
                    odds[u] = p / (1.0 - p);
                }
                out = draw_conditional_poisson(odds, part.n_k(), rng, d.max_attempts);
            }
        },
        design);
    return out;
}

// ---------------------------------------------------------------------------
// Fold-wise conditional fluctuation bound
// ---------------------------------------------------------------------------

struct BoundReport {
    int fold = 0;      // 1-based
    Index N_k = 0;
    Index n_k = 0;
    Index n = 0;
    double lhs = 0.0;  // MC estimate of E(D_k^2 | G_k)
    double mc_se = 0.0;
    double mean_square_a = 0.0;
    double C_min = 0.0;
    double rhs = 0.0;  // (C_min / n) mean(a^2)
    double multiplier = std::numeric_limits<double>::quiet_NaN();  // closed form when available
    bool satisfied = false;
};

/// Geometric grid of candidate constants C.
inline std::vector<double> default_c_grid() {
    std::vector<double> grid;
    for (double c = 1e-3; c <= 1e5; c *= 1.02) grid.push_back(c);
    return grid;
}

namespace detail {

inline double closed_form_multiplier(const DesignSpec& design, const FoldPart& part, const Vector& pi) {
    if (const auto* d = std::get_if<SrsworDesign>(&design)) {
        if (part.N_k() < 2) return std::numeric_limits<double>::quiet_NaN();
        return srs_multiplier(part.N_k(), part.n_k(), static_cast<double>(d->n) / static_cast<double>(d->N));
    }
    if (const auto* d = std::get_if<StratifiedDesign>(&design)) {
        const auto H = d->n_h.size();
        std::vector<Index> Nhk(H, 0), nhk(H, 0);
        std::vector<double> pih(H);
        for (Index i : part.units) ++Nhk[static_cast<std::size_t>(d->strata.labels[static_cast<std::size_t>(i)] - 1)];
        for (Index i : part.sampled) ++nhk[static_cast<std::size_t>(d->strata.labels[static_cast<std::size_t>(i)] - 1)];
        for (std::size_t h = 0; h < H; ++h) {
            if (Nhk[h] < 2) return std::numeric_limits<double>::quiet_NaN();
            pih[h] = static_cast<double>(d->n_h[h]) / static_cast<double>(d->strata.sizes[h]);
        }
        return stratified_multiplier(Nhk, nhk, pih).multiplier();
    }
    (void)pi;
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Estimate E(D_k^2 | G_k), D_k = N_k^-1 sum_{U_k} (I_i/pi_i - 1) a_i, by
/// inner Monte Carlo redraws of each fold given the outer sample, and find
/// the smallest C on the grid with lhs <= (C / n) mean(a^2).
/// a_arrays[k] is aligned with fold k's units in index order.
inline std::vector<BoundReport> fluctuation_check(const DesignSpec& design, const Vector& pi,
                                                  const FoldAssignment& folds, const DrawnSample& outer,
                                                  const std::vector<Vector>& a_arrays, int inner_reps, Rng& rng,
                                                  const std::vector<double>& c_grid = default_c_grid()) {
    if (inner_reps < 100) throw std::invalid_argument("fluctuation_check needs at least 100 inner replications");
    if (static_cast<int>(a_arrays.size()) != folds.K) throw std::invalid_argument("one a-array per fold is required");
    const auto parts = fold_partition(folds, outer);
    const Index n = outer.n_realized();
    std::vector<BoundReport> reports;
    for (int k = 0; k < folds.K; ++k) {
        const auto& part = parts[static_cast<std::size_t>(k)];
        const Vector& a = a_arrays[static_cast<std::size_t>(k)];
        if (a.size() != part.N_k()) throw std::invalid_argument("a-array length differs from the fold size");
        BoundReport rep;
        rep.fold = k + 1;
        rep.N_k = part.N_k();
        rep.n_k = part.n_k();
        rep.n = n;
        rep.multiplier = detail::closed_form_multiplier(design, part, pi);
        if (part.N_k() == 0) {
            rep.satisfied = true;
            rep.C_min = c_grid.front();
            reports.push_back(rep);
            continue;
        }
        rep.mean_square_a = a.squaredNorm() / static_cast<double>(part.N_k());
        double sum = 0.0, sum_sq = 0.0;
        for (int r = 0; r < inner_reps; ++r) {
            const auto ind = redraw_fold(design, part, rng);
            double d = 0.0;
            for (std::size_t u = 0; u < part.units.size(); ++u) {
                d += ((ind[u] ? 1.0 / pi(part.units[u]) : 0.0) - 1.0) * a(static_cast<Index>(u));
            }
            d /= static_cast<double>(part.N_k());
            sum += d * d;
            sum_sq += d * d * d * d;
        }
        const double reps = static_cast<double>(inner_reps);
        rep.lhs = sum / reps;
        rep.mc_se = std::sqrt(std::max(0.0, sum_sq / reps - rep.lhs * rep.lhs) / (reps - 1.0));
        rep.C_min = std::numeric_limits<double>::infinity();
        for (double c : c_grid) {
            if (rep.lhs <= c / static_cast<double>(n) * rep.mean_square_a) {
                rep.C_min = c;
                break;
            }
        }
        rep.satisfied = std::isfinite(rep.C_min);
        rep.rhs = rep.satisfied ? rep.C_min / static_cast<double>(n) * rep.mean_square_a
                                : std::numeric_limits<double>::infinity();
        reports.push_back(rep);
    }
    return reports;
}

/// Empirical (1 - eta) quantile of C_min over a collection of fold reports:
/// the stand-in for the constant C_eta.
inline double c_eta_estimate(const std::vector<BoundReport>& reports, double eta = 0.1) {
    std::vector<double> c;
    for (const auto& r : reports) {
        if (r.mean_square_a > 0.0) c.push_back(r.C_min);
    }
    if (c.empty()) return 0.0;
    std::sort(c.begin(), c.end());
    const double pos = (1.0 - eta) * static_cast<double>(c.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, c.size() - 1);
    return c[lo] + (pos - static_cast<double>(lo)) * (c[hi] - c[lo]);
}

/// Least-squares slope of log(y) on log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope needs two or more points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

enum class ArrayKind { constant, normal, heavy_tailed, oracle_error };

inline std::string array_kind_name(ArrayKind k) {
    switch (k) {
        case ArrayKind::constant: return "constant";
        case ArrayKind::normal: return "normal";
        case ArrayKind::heavy_tailed: return "heavy";
        case ArrayKind::oracle_error: return "oracle";
    }
    return "?";
}

/// G_k-measurable test arrays: constants, iid N(0,1), iid Student-t(3), or
/// out-of-fold OLS prediction errors m_hat^(-k) - m (needs a population).
inline std::vector<Vector> make_a_arrays(ArrayKind kind, const FoldAssignment& folds, const DrawnSample& outer,
                                         Rng& rng, const Population* pop = nullptr) {
    const auto parts = fold_partition(folds, outer);
    std::vector<Vector> arrays;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::student_t_distribution<double> t3(3.0);
    for (int k = 0; k < folds.K; ++k) {
        const auto& part = parts[static_cast<std::size_t>(k)];
        Vector a(part.N_k());
        switch (kind) {
            case ArrayKind::constant: a.setOnes(); break;
            case ArrayKind::normal:
                for (Index u = 0; u < a.size(); ++u) a(u) = normal(rng);
                break;
            case ArrayKind::heavy_tailed:
                for (Index u = 0; u < a.size(); ++u) a(u) = t3(rng);
                break;
            case ArrayKind::oracle_error: {
                if (pop == nullptr) throw std::invalid_argument("oracle-error arrays need a population");
                IndexSet train;
                for (Index i : outer.indices) {
                    if (folds.fold_of(i) != k) train.push_back(i);
                }
                if (train.empty()) throw Error("fold has no out-of-fold sampled units");
                const FitResult fit = fit_ols(pop->x(train, Eigen::all), pop->y(train));
                a = predict(fit, pop->x(part.units, Eigen::all)) - pop->m_oracle(part.units);
                break;
            }
        }
        arrays.push_back(std::move(a));
    }
    return arrays;
}

// ---------------------------------------------------------------------------
// Conditional mean of the fold remainder
// ---------------------------------------------------------------------------

struct ConditionalMoment {
    int fold = 0;  // 1-based
    double mean = 0.0;
    double mc_se = 0.0;
};

/// Inner-MC mean of R_{N,k} given G_k, holding the out-of-fold prediction
/// m_hat^(-k) fixed and redrawing only fold-k indicators.
inline std::vector<ConditionalMoment> conditional_remainder_mean(const DesignSpec& design, const Vector& pi,
                                                                 const SregInternals& internals,
                                                                 const DrawnSample& outer, const Vector& m_oracle,
                                                                 int inner_reps, Rng& rng) {
    const auto parts = fold_partition(internals.folds, outer);
    std::vector<ConditionalMoment> out;
    for (int k = 0; k < internals.folds.K; ++k) {
        const auto& part = parts[static_cast<std::size_t>(k)];
        double sum = 0.0, sum_sq = 0.0;
        for (int r = 0; r < inner_reps; ++r) {
            const auto ind = redraw_fold(design, part, rng);
            double rk = 0.0;
            for (std::size_t u = 0; u < part.units.size(); ++u) {
                const Index i = part.units[u];
                rk += (1.0 - (ind[u] ? 1.0 / pi(i) : 0.0)) * (internals.oof_prediction(i) - m_oracle(i));
            }
            sum += rk;
            sum_sq += rk * rk;
        }
        const double reps = static_cast<double>(inner_reps);
        ConditionalMoment m;
        m.fold = k + 1;
        m.mean = sum / reps;
        m.mc_se = std::sqrt(std::max(0.0, sum_sq / reps - m.mean * m.mean) / (reps - 1.0));
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// GREG vs SREG discrepancy from the oracle estimator as p grows
// ---------------------------------------------------------------------------

struct EquivalenceRow {
    std::string estimator;
    Index p = 0;
    double mean = 0.0;  // mean of sqrt(n) |T_hat - T_diff| / N
    double q10 = 0.0;
    double q50 = 0.0;
    double q90 = 0.0;
    double mean_signed = 0.0;  // mean of sqrt(n) (T_hat - T_diff) / N
    double se_signed = 0.0;
};

using DesignFactory = std::function<DesignSpec(const Population&)>;

inline std::vector<EquivalenceRow> equivalence_study(const PopulationConfig& base, const DesignFactory& make_design,
                                                     const std::vector<Index>& p_grid, int B, int K = 10,
                                                     std::uint64_t seed = 1) {
    auto quantile = [](std::vector<double> v, double q) {
        std::sort(v.begin(), v.end());
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    std::vector<EquivalenceRow> rows;
    for (Index p : p_grid) {
        PopulationConfig cfg = base;
        cfg.p = std::max<Index>(p, 1);
        cfg.s = std::min(base.s, p);
        const Population pop = generate_population(cfg);
        const DesignSpec design = make_design(pop);
        const Vector pi = first_order_probs(design);
        const Matrix x = pop.x.leftCols(p);
        std::vector<double> greg_abs, sreg_abs, greg_signed, sreg_signed;
        for (int b = 0; b < B; ++b) {
            Rng design_rng = substream(seed, {static_cast<std::uint64_t>(Stream::design), static_cast<std::uint64_t>(p),
                                              static_cast<std::uint64_t>(b)});
            Rng fold_rng = substream(seed, {static_cast<std::uint64_t>(Stream::folds), static_cast<std::uint64_t>(p),
                                            static_cast<std::uint64_t>(b)});
            Rng fit_rng = substream(seed, {static_cast<std::uint64_t>(Stream::fit), static_cast<std::uint64_t>(p),
                                           static_cast<std::uint64_t>(b)});
            const DrawnSample sample = draw_sample(design, design_rng);
            const FoldAssignment folds = assign_folds(pop.size(), K, fold_rng);
            const Vector ys = pop.y(sample.indices);
            const double diff = diff_oracle(pop.m_oracle, sample, pi, ys).point;
            const double g = greg(x, sample, pi, ys, FitSpec::ols(), fit_rng).point;
            const double s = sreg(x, sample, pi, ys, FitSpec::ols(), folds, fit_rng).point;
            const double scale = std::sqrt(static_cast<double>(sample.n_realized())) / static_cast<double>(pop.size());
            greg_signed.push_back(scale * (g - diff));
            sreg_signed.push_back(scale * (s - diff));
            greg_abs.push_back(std::abs(greg_signed.back()));
            sreg_abs.push_back(std::abs(sreg_signed.back()));
        }
        auto summarize = [&](const std::string& name, const std::vector<double>& abs_v, const std::vector<double>& sgn) {
            EquivalenceRow row;
            row.estimator = name;
            row.p = p;
            row.mean = std::accumulate(abs_v.begin(), abs_v.end(), 0.0) / static_cast<double>(abs_v.size());
            row.q10 = quantile(abs_v, 0.1);
            row.q50 = quantile(abs_v, 0.5);
            row.q90 = quantile(abs_v, 0.9);
            row.mean_signed = std::accumulate(sgn.begin(), sgn.end(), 0.0) / static_cast<double>(sgn.size());
            double ss = 0.0;
            for (double v : sgn) ss += (v - row.mean_signed) * (v - row.mean_signed);
            row.se_signed = sgn.size() > 1 ? std::sqrt(ss / static_cast<double>(sgn.size() - 1) / static_cast<double>(sgn.size())) : 0.0;
            rows.push_back(row);
        };
        summarize("GREG", greg_abs, greg_signed);
        summarize("SREG", sreg_abs, sreg_signed);
    }
    return rows;
}

}  // namespace sreg
