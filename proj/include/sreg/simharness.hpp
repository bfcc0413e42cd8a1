#pragma once

#include "sreg/designs.hpp"
#include "sreg/diagnostics.hpp"
#include "sreg/estimators.hpp"
#include "sreg/folds.hpp"
#include "sreg/popgen.hpp"
#include "sreg/regfit.hpp"
#include "sreg/rng.hpp"
#include "sreg/scenario.hpp"
#include "sreg/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sreg {

enum class PopulationMode { fixed, per_replication };

inline const std::vector<std::string>& all_estimators() {
    static const std::vector<std::string> names{"HT",   "Diff", "GREG.Oracle", "GREG",
                                                "SREG", "GREG.Lasso", "SREG.Lasso"};
    return names;
}

inline bool is_known_estimator(const std::string& name) {
    const auto& all = all_estimators();
    return std::find(all.begin(), all.end(), name) != all.end();
}

struct ExperimentConfig {
    PopulationConfig population;
    DesignConfig design;
    int K = 10;
    int B = 500;
    std::vector<std::string> estimators = all_estimators();
    std::uint64_t master_seed = 1;
    int threads = 1;
    PopulationMode population_mode = PopulationMode::fixed;
    double level = 0.95;
    bool balanced_folds = false;
    Weighting weighting = Weighting::unweighted;
    bool standardize = true;
    bool intercept = true;
    int cv_folds = 10;
    int lambda_grid = 100;
    double failure_fraction = 0.01;

    void validate() const {
        population.validate();
        if (B < 1) throw std::invalid_argument("B must be at least 1");
        if (K < 2) throw std::invalid_argument("K must be at least 2");
        if (estimators.empty()) throw std::invalid_argument("estimator list must not be empty");
        for (const auto& e : estimators) {
            if (!is_known_estimator(e)) throw std::invalid_argument("unknown estimator '" + e + "'");
        }
        if (threads < 1) throw std::invalid_argument("threads must be at least 1");
    }

    [[nodiscard]] FitSpec ols_spec() const {
        FitSpec s = FitSpec::ols();
        s.weighting = weighting;
        s.intercept = intercept;
        return s;
    }

    [[nodiscard]] FitSpec lasso_spec() const {
        FitSpec s = FitSpec::lasso_cv();
        s.weighting = weighting;
        s.intercept = intercept;
        s.standardize = standardize;
        s.lambda_rule = CrossValidatedLambda{cv_folds, lambda_grid, 1e-4};
        return s;
    }
};

struct ReplicationRecord {
    int replication = 0;
    std::string estimator;
    double truth = 0.0;
    double estimate = 0.0;
    std::optional<double> variance;
    std::optional<ConfidenceInterval> ci;
    Index n_realized = 0;

    [[nodiscard]] bool covered() const { return ci && !ci->degenerate && ci->low <= truth && truth <= ci->high; }
};

struct EstimatorMetrics {
    std::string estimator;
    int b_effective = 0;
    double bias = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();
    double rmse = 0.0;
    std::optional<double> rb;
    std::optional<double> cr;
    // Monte Carlo standard errors of the metrics above
    double bias_mc_se = std::numeric_limits<double>::quiet_NaN();
    double se_mc_se = std::numeric_limits<double>::quiet_NaN();
    double rmse_mc_se = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> rb_mc_se;
    std::optional<double> cr_mc_se;
    bool se_defined = false;
    int degenerate_variances = 0;
};

struct MetricsTable {
    std::vector<EstimatorMetrics> rows;
    int replications_requested = 0;
    int failures = 0;
    std::vector<std::string> failure_messages;
    std::uint64_t seed = 0;
    std::size_t capped_units = 0;
    std::size_t clamped_joint_pairs = 0;

    [[nodiscard]] const EstimatorMetrics& at(const std::string& name) const {
        for (const auto& r : rows) {
            if (r.estimator == name) return r;
        }
        throw std::out_of_range("no metrics for estimator " + name);
    }
};

struct ExperimentResult {
    MetricsTable metrics;
    std::vector<ReplicationRecord> records;  // replication-major, estimator order within
};

namespace detail {

struct ReplicationOutcome {
    std::vector<ReplicationRecord> records;
    std::optional<std::string> failure;
};

inline bool identity_holds(double sreg_point, double diff_point, double remainder_total) {
    return std::abs((sreg_point - diff_point) - remainder_total) <= 1e-10 * (1.0 + std::abs(sreg_point));
}

inline ReplicationOutcome run_replication(const ExperimentConfig& cfg, const Population& pop,
                                          const Scenario& scen, int b) {
    ReplicationOutcome out;
    const auto ub = static_cast<std::uint64_t>(b);
    Rng design_rng = substream(cfg.master_seed, Stream::design, ub);
    Rng fold_rng = substream(cfg.master_seed, Stream::folds, ub);
    const DrawnSample sample = draw_sample(scen.design, design_rng);
    const FoldAssignment folds = assign_folds(pop.size(), cfg.K, fold_rng, cfg.balanced_folds);
    const Vector ys = pop.y(sample.indices);
    const Vector& pi = scen.weights;
    const double truth = population_total(pop.y);

    std::optional<double> diff_point;
    auto diff_value = [&]() {
        if (!diff_point) diff_point = diff_oracle(pop.m_oracle, sample, pi, ys).point;
        return *diff_point;
    };

    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
        const std::string& name = cfg.estimators[e];
        Rng fit_rng = substream(cfg.master_seed, {static_cast<std::uint64_t>(Stream::fit), ub, e});
        EstimateReport rep;
        if (name == "HT") {
            rep = ht_total(sample, pi, ys);
        } else if (name == "Diff") {
            rep = diff_oracle(pop.m_oracle, sample, pi, ys);
        } else if (name == "GREG.Oracle") {
            const Index s = pop.beta_true.size() > 0 ? (pop.beta_true.array() != 0.0).count() : 0;
            rep = greg(pop.x.leftCols(s), sample, pi, ys, cfg.ols_spec(), fit_rng);
        } else if (name == "GREG") {
            rep = greg(pop.x, sample, pi, ys, cfg.ols_spec(), fit_rng);
        } else if (name == "GREG.Lasso") {
            rep = greg(pop.x, sample, pi, ys, cfg.lasso_spec(), fit_rng);
        } else if (name == "SREG") {
            rep = sreg(pop.x, sample, pi, ys, cfg.ols_spec(), folds, fit_rng);
        } else if (name == "SREG.Lasso") {
            rep = sreg(pop.x, sample, pi, ys, cfg.lasso_spec(), folds, fit_rng);
        }
        rep.estimator = name;
        if (rep.internals) {
            const auto rem = remainder(*rep.internals, pop.m_oracle, sample, pi);
            if (!identity_holds(rep.point, diff_value(), rem.total)) {
                throw std::logic_error("remainder identity failed for " + name + " in replication " +
                                       std::to_string(b));
            }
        }
        attach_variance(rep, ht_variance_general(rep.residuals, sample, pi, scen.joint), cfg.level);

        ReplicationRecord rec;
        rec.replication = b;
        rec.estimator = name;
        rec.truth = truth;
        rec.estimate = rep.point;
        rec.variance = rep.variance;
        rec.ci = rep.ci;
        rec.n_realized = sample.n_realized();
        out.records.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<EstimatorMetrics> summarize(const std::vector<std::string>& estimators,
                                               const std::vector<ReplicationRecord>& records) {
    std::vector<EstimatorMetrics> rows;
    for (const auto& name : estimators) {
        std::vector<const ReplicationRecord*> recs;
        for (const auto& r : records) {
            if (r.estimator == name) recs.push_back(&r);
        }
        EstimatorMetrics m;
        m.estimator = name;
        m.b_effective = static_cast<int>(recs.size());
        if (recs.empty()) {
            rows.push_back(m);
            continue;
        }
        const double B = static_cast<double>(recs.size());
        double mean_est = 0.0, mean_err = 0.0, mean_sq = 0.0;
        for (const auto* r : recs) {
            mean_est += r->estimate;
            mean_err += r->estimate - r->truth;
            mean_sq += (r->estimate - r->truth) * (r->estimate - r->truth);
        }
        mean_est /= B;
        mean_err /= B;
        mean_sq /= B;
        m.bias = mean_err;
        m.rmse = std::sqrt(mean_sq);
        double var_sq_err = 0.0;
        for (const auto* r : recs) {
            const double d = (r->estimate - r->truth) * (r->estimate - r->truth) - mean_sq;
            var_sq_err += d * d;
        }
        m.se_defined = recs.size() > 1;
        double var_mc = std::numeric_limits<double>::quiet_NaN();
        if (m.se_defined) {
            double ss = 0.0;
            for (const auto* r : recs) ss += (r->estimate - mean_est) * (r->estimate - mean_est);
            var_mc = ss / (B - 1.0);
            m.se = std::sqrt(var_mc);
            m.bias_mc_se = m.se / std::sqrt(B);
            m.se_mc_se = m.se / std::sqrt(2.0 * (B - 1.0));
            m.rmse_mc_se = m.rmse > 0.0 ? std::sqrt(var_sq_err / (B - 1.0) / B) / (2.0 * m.rmse) : 0.0;
        }

        bool all_var = true;
        for (const auto* r : recs) all_var = all_var && r->variance.has_value();
        if (all_var) {
            double mean_v = 0.0, covered = 0.0;
            for (const auto* r : recs) {
                mean_v += *r->variance;
                covered += r->covered() ? 1.0 : 0.0;
                if (!r->ci || r->ci->degenerate) ++m.degenerate_variances;
            }
            mean_v /= B;
            m.cr = covered / B;
            m.cr_mc_se = std::sqrt(*m.cr * (1.0 - *m.cr) / B);
            if (m.se_defined && var_mc > 0.0) {
                m.rb = mean_v / var_mc - 1.0;
                double vv = 0.0;
                for (const auto* r : recs) vv += (*r->variance - mean_v) * (*r->variance - mean_v);
                vv /= std::max(1.0, B - 1.0);
                const double rel = (mean_v != 0.0 ? vv / (B * mean_v * mean_v) : 0.0) + 2.0 / (B - 1.0);
                m.rb_mc_se = (1.0 + *m.rb) * std::sqrt(rel);
            }
        }
        rows.push_back(m);
    }
    return rows;
}

}  // namespace detail

/// Run B replications: draw folds and a sample, compute every requested
/// estimator with its HT-type variance, and reduce in replication order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::optional<Population> fixed_pop;
    std::optional<Scenario> fixed_scen;
    if (cfg.population_mode == PopulationMode::fixed) {
        fixed_pop = generate_population(cfg.population);
        fixed_scen = build_scenario(cfg.design, *fixed_pop);
    }

    std::vector<detail::ReplicationOutcome> outcomes(static_cast<std::size_t>(cfg.B));
    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int b = next.fetch_add(1);
            if (b >= cfg.B) return;
            auto& slot = outcomes[static_cast<std::size_t>(b)];
            try {
                if (fixed_pop) {
                    slot = detail::run_replication(cfg, *fixed_pop, *fixed_scen, b);
                } else {
                    PopulationConfig pc = cfg.population;
                    pc.seed = substream(cfg.population.seed, Stream::population, static_cast<std::uint64_t>(b))();
                    const Population pop = generate_population(pc);
                    const Scenario scen = build_scenario(cfg.design, pop);
                    slot = detail::run_replication(cfg, pop, scen, b);
                }
            } catch (const Error& err) {
                slot.records.clear();
                slot.failure = "replication " + std::to_string(b) + ": " + err.what();
            }
        }
    };
    const int nthreads = std::min(cfg.threads, cfg.B);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentResult result;
    result.metrics.replications_requested = cfg.B;
    result.metrics.seed = cfg.master_seed;
    if (fixed_scen) {
        result.metrics.capped_units = fixed_scen->capped_units;
        result.metrics.clamped_joint_pairs = fixed_scen->joint.clamped_pairs();
    }
    for (auto& o : outcomes) {
        if (o.failure) {
            ++result.metrics.failures;
            result.metrics.failure_messages.push_back(*o.failure);
        }
        for (auto& r : o.records) result.records.push_back(std::move(r));
    }
    if (static_cast<double>(result.metrics.failures) > cfg.failure_fraction * static_cast<double>(cfg.B)) {
        throw Error(std::to_string(result.metrics.failures) + " of " + std::to_string(cfg.B) +
                    " replications failed; first: " + result.metrics.failure_messages.front());
    }
    result.metrics.rows = detail::summarize(cfg.estimators, result.records);
    return result;
}

enum class SweepAxis { p, r };

struct SweepRow {
    SweepAxis axis = SweepAxis::p;
    double value = 0.0;
    EstimatorMetrics metrics;
};

/// run_experiment at every grid point of p or r; the population is
/// regenerated per point from the same seed.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& grid) {
    std::vector<SweepRow> rows;
    for (double v : grid) {
        ExperimentConfig cfg = base;
        if (axis == SweepAxis::p) {
            cfg.population.p = static_cast<Index>(std::llround(v));
            cfg.population.s = std::min(cfg.population.s, cfg.population.p);
        } else {
            cfg.population.r = v;
        }
        const auto result = run_experiment(cfg);
        for (const auto& m : result.metrics.rows) rows.push_back({axis, v, m});
    }
    return rows;
}

}  // namespace sreg
