#include "sreg/simharness.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace sreg;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.population.N = 300;
    cfg.population.p = 20;
    cfg.design.n = 90;
    cfg.K = 5;
    cfg.B = 12;
    cfg.estimators = {"HT", "Diff", "GREG.Oracle", "GREG", "SREG"};
    cfg.master_seed = 17;
    return cfg;
}

ReplicationRecord record(int b, double truth, double est, double var) {
    ReplicationRecord r;
    r.replication = b;
    r.estimator = "X";
    r.truth = truth;
    r.estimate = est;
    r.variance = var;
    r.ci = confidence_interval(est, var);
    return r;
}

}  // namespace

TEST(Harness, RecordCountsAndMetricConsistency) {
    const auto cfg = small_config();
    const auto res = run_experiment(cfg);
    EXPECT_EQ(res.records.size(), static_cast<std::size_t>(cfg.B) * cfg.estimators.size());
    ASSERT_EQ(res.metrics.rows.size(), cfg.estimators.size());
    const double B = cfg.B;
    for (const auto& m : res.metrics.rows) {
        EXPECT_EQ(m.b_effective, cfg.B);
        EXPECT_GE(m.rmse + 1e-12, std::abs(m.bias));
        EXPECT_NEAR(m.rmse * m.rmse, m.bias * m.bias + m.se * m.se * (B - 1) / B, 1e-8 * m.rmse * m.rmse);
        ASSERT_TRUE(m.cr.has_value());
        EXPECT_GE(*m.cr, 0.0);
        EXPECT_LE(*m.cr, 1.0);
    }
}

TEST(Harness, DeterministicAcrossThreads) {
    auto cfg = small_config();
    const auto a = run_experiment(cfg);
    cfg.threads = 3;
    const auto b = run_experiment(cfg);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].estimate, b.records[i].estimate);
        EXPECT_EQ(a.records[i].variance, b.records[i].variance);
    }
    for (std::size_t i = 0; i < a.metrics.rows.size(); ++i) EXPECT_EQ(a.metrics.rows[i].bias, b.metrics.rows[i].bias);
}

TEST(Harness, SingleReplicationFlagsSe) {
    auto cfg = small_config();
    cfg.B = 1;
    const auto res = run_experiment(cfg);
    for (const auto& m : res.metrics.rows) {
        EXPECT_FALSE(m.se_defined);
        EXPECT_TRUE(std::isnan(m.se));
        EXPECT_FALSE(m.rb.has_value());
    }
}

TEST(Harness, NoiselessOlsEstimatorsAreExact) {
    auto cfg = small_config();
    cfg.population.sigma2 = 0.0;
    cfg.population.p = 5;
    cfg.population.s = 3;
    cfg.estimators = {"GREG", "SREG"};
    cfg.B = 5;
    const auto res = run_experiment(cfg);
    const double truth = res.records.front().truth;
    for (const auto& m : res.metrics.rows) {
        EXPECT_LE(std::abs(m.bias), 1e-6 * std::abs(truth));
        EXPECT_LE(m.se, 1e-6 * std::abs(truth));
    }
}

TEST(Harness, SummaryFormulas) {
    std::vector<ReplicationRecord> recs{record(0, 10, 11, 4), record(1, 10, 8, 1), record(2, 10, 10.5, 0.25)};
    const auto rows = detail::summarize({"X"}, recs);
    ASSERT_EQ(rows.size(), 1u);
    const auto& m = rows[0];
    const double mean = (11 + 8 + 10.5) / 3.0;
    const double var = ((11 - mean) * (11 - mean) + (8 - mean) * (8 - mean) + (10.5 - mean) * (10.5 - mean)) / 2.0;
    EXPECT_NEAR(m.bias, mean - 10, 1e-12);
    EXPECT_NEAR(m.se, std::sqrt(var), 1e-12);
    EXPECT_NEAR(m.rmse, std::sqrt((1 + 4 + 0.25) / 3.0), 1e-12);
    EXPECT_NEAR(*m.rb, (4 + 1 + 0.25) / 3.0 / var - 1.0, 1e-12);
    // 11 +- 3.92 covers 10, 8 +- 1.96 misses, 10.5 +- 0.98 covers
    EXPECT_NEAR(*m.cr, 2.0 / 3.0, 1e-12);
}

TEST(Harness, PerReplicationPopulationMode) {
    auto cfg = small_config();
    cfg.population_mode = PopulationMode::per_replication;
    cfg.B = 3;
    cfg.estimators = {"HT"};
    const auto res = run_experiment(cfg);
    ASSERT_EQ(res.records.size(), 3u);
    EXPECT_NE(res.records[0].truth, res.records[1].truth);
}

TEST(Harness, FailuresAreCountedAndCapped) {
    auto cfg = small_config();
    cfg.design.kind = DesignKind::rejective;
    cfg.design.max_attempts = 1;
    cfg.estimators = {"HT"};
    cfg.B = 4;
    EXPECT_THROW(run_experiment(cfg), Error);
    cfg.failure_fraction = 1.0;
    const auto res = run_experiment(cfg);
    EXPECT_EQ(res.metrics.failures + res.metrics.rows[0].b_effective, 4);
    EXPECT_GT(res.metrics.failures, 0);
    EXPECT_EQ(res.metrics.failure_messages.size(), static_cast<std::size_t>(res.metrics.failures));
}

TEST(Harness, ConfigValidation) {
    auto cfg = small_config();
    cfg.estimators = {"HT", "Nope"};
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
    cfg = small_config();
    cfg.B = 0;
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
    cfg = small_config();
    cfg.estimators.clear();
    EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
}

TEST(Sweep, LongFormatRows) {
    auto cfg = small_config();
    cfg.B = 4;
    cfg.estimators = {"HT", "GREG"};
    const auto rows = sweep(cfg, SweepAxis::r, {0.0, -0.5});
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].value, 0.0);
    EXPECT_EQ(rows[2].value, -0.5);
    EXPECT_EQ(rows[1].metrics.estimator, "GREG");
    const auto prow = sweep(cfg, SweepAxis::p, {3});
    ASSERT_EQ(prow.size(), 2u);
}
