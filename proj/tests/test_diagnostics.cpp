#include "sreg/diagnostics.hpp"
#include "sreg/scenario.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace sreg;

namespace {

/// E(D^2) for an SRSWOR draw of n_k of the N_k fold units with fixed a:
/// D = N_k^-1 sum (I_i / pi - 1) a_i, E(I) = f = n_k / N_k,
/// Var(sum_A a) = n_k (1 - f) S^2.
double srs_second_moment(const Vector& a, Index n_k, double pi) {
    const double Nk = static_cast<double>(a.size()), nk = static_cast<double>(n_k);
    const double f = nk / Nk;
    const double mean = (f / pi - 1.0) * a.sum() / Nk;
    const double s2 = a.size() > 1 ? (a.array() - a.mean()).square().sum() / (Nk - 1.0) : 0.0;
    const double var = nk * (1.0 - f) * s2 / (pi * pi * Nk * Nk);
    return var + mean * mean;
}

}  // namespace

TEST(Remainder, OracleFitGivesZero) {
    PopulationConfig pc;
    pc.N = 100;
    pc.p = 3;
    pc.s = 3;
    const Population pop = generate_population(pc);
    Rng rng(1);
    SregInternals st;
    st.folds = assign_folds(100, 5, rng);
    st.oof_prediction = pop.m_oracle;
    const DrawnSample s = draw_sample(SrsworDesign{100, 30}, rng);
    EXPECT_EQ(remainder(st, pop.m_oracle, s, Vector::Constant(100, 0.3)).total, 0.0);
}

TEST(Remainder, FullPopulationSampleGivesZero) {
    PopulationConfig pc;
    pc.N = 50;
    pc.p = 3;
    pc.s = 3;
    const Population pop = generate_population(pc);
    Rng rng(2);
    const DrawnSample all = DrawnSample::from_indicators(std::vector<std::uint8_t>(50, 1));
    const auto rep = sreg::sreg(pop.x, all, Vector::Ones(50), pop.y, FitSpec::ols(), assign_folds(50, 5, rng), rng);
    EXPECT_NEAR(remainder(*rep.internals, pop.m_oracle, all, Vector::Ones(50)).total, 0.0, 1e-12);
}

TEST(Remainder, MatchesDirectSubtraction) {
    PopulationConfig pc;
    pc.N = 500;
    pc.p = 30;
    const Population pop = generate_population(pc);
    DesignConfig dc;
    dc.n = 150;
    for (DesignKind kind : {DesignKind::stratified, DesignKind::rejective, DesignKind::srswor, DesignKind::poisson}) {
        dc.kind = kind;
        const Scenario scen = build_scenario(dc, pop);
        for (int r = 0; r < 20; ++r) {
            Rng rng = substream(3, Stream::design, static_cast<std::uint64_t>(r));
            const DrawnSample s = draw_sample(scen.design, rng);
            const Vector ys = pop.y(s.indices);
            const auto rep = sreg::sreg(pop.x, s, scen.weights, ys, FitSpec::ols(), assign_folds(500, 10, rng), rng);
            const double diff = diff_oracle(pop.m_oracle, s, scen.weights, ys).point;
            const double rn = remainder(*rep.internals, pop.m_oracle, s, scen.weights).total;
            EXPECT_LE(std::abs((rep.point - diff) - rn), 1e-10 * (1.0 + std::abs(rep.point))) << to_string(kind);
        }
    }
}

TEST(Multiplier, SrsArithmetic) {
    EXPECT_NEAR(srs_multiplier(100, 30, 0.3), (3000.0 / 99.0) / 900.0, 1e-15);
    EXPECT_NEAR(srs_multiplier(100, 30, 0.3), 0.0336700336700, 1e-9);
    // second term vanishes when n_k = pi N_k
    EXPECT_NEAR(srs_multiplier(50, 10, 0.2), (10.0 * 50.0 / 49.0) / (0.04 * 2500.0), 1e-15);
    EXPECT_THROW(srs_multiplier(1, 1, 0.3), std::invalid_argument);
}

TEST(Multiplier, SrsIsAnUpperBoundOnTheMoment) {
    Rng rng(4);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int r = 0; r < 50; ++r) {
        Vector a(40);
        for (Index i = 0; i < 40; ++i) a(i) = nd(rng) + 0.5;
        const Index nk = 8 + r % 10;
        EXPECT_LE(srs_second_moment(a, nk, 0.3), srs_multiplier(40, nk, 0.3) * a.squaredNorm() / 40.0 * (1 + 1e-12));
    }
}

TEST(Multiplier, StratifiedProportionalHasNoBiasTerm) {
    const std::vector<Index> Nhk{20, 40, 25};
    const std::vector<double> pih{0.25, 0.5, 0.2};
    const std::vector<Index> nhk{5, 20, 5};
    const auto m = stratified_multiplier(Nhk, nhk, pih);
    EXPECT_EQ(m.B, 0.0);
    EXPECT_EQ(m.N_k, 85);
    const double V = 5 / (0.0625 * 19) + 20 / (0.25 * 39) + 5 / (0.04 * 24);
    EXPECT_NEAR(m.V, V, 1e-12);
}

TEST(Multiplier, SingleStratumReducesToSrs) {
    const std::vector<Index> Nhk{100}, nhk{27};
    const std::vector<double> pih{0.3};
    const auto m = stratified_multiplier(Nhk, nhk, pih);
    EXPECT_NEAR(m.multiplier() * 100.0, srs_multiplier(100, 27, 0.3) * 100.0, 1e-12);
}

TEST(Multiplier, PaperStrataScaleAsOneOverN) {
    // multiplier * n stays bounded over growing N with balanced folds
    std::vector<double> scaled;
    for (Index N : {400, 800, 1600}) {
        PopulationConfig pc;
        pc.N = N;
        pc.p = 2;
        pc.s = 1;
        const Population pop = generate_population(pc);
        DesignConfig dc;
        dc.n = static_cast<Index>(0.3 * N);
        const Scenario scen = build_scenario(dc, pop);
        const auto& d = std::get<StratifiedDesign>(scen.design);
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Rng rng(seed);
            const DrawnSample s = draw_sample(scen.design, rng);
            const auto folds = assign_folds(N, 10, rng, true);
            for (const auto& part : fold_partition(folds, s)) {
                std::vector<Index> Nhk(4, 0), nhk(4, 0);
                std::vector<double> pih(4);
                for (Index i : part.units) ++Nhk[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1)];
                for (Index i : part.sampled) ++nhk[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1)];
                for (std::size_t h = 0; h < 4; ++h) pih[h] = static_cast<double>(d.n_h[h]) / static_cast<double>(d.strata.sizes[h]);
                worst = std::max(worst, stratified_multiplier(Nhk, nhk, pih).multiplier() * static_cast<double>(dc.n));
            }
        }
        scaled.push_back(worst);
    }
    const double lo = *std::min_element(scaled.begin(), scaled.end());
    const double hi = *std::max_element(scaled.begin(), scaled.end());
    EXPECT_LT(hi / lo, 2.0);
}

TEST(Redraw, PreservesConditioningStatistics) {
    PopulationConfig pc;
    pc.N = 400;
    pc.p = 2;
    pc.s = 1;
    const Population pop = generate_population(pc);
    DesignConfig dc;
    dc.n = 120;
    for (DesignKind kind : {DesignKind::stratified, DesignKind::rejective, DesignKind::srswor}) {
        dc.kind = kind;
        const Scenario scen = build_scenario(dc, pop);
        Rng rng(5);
        const DrawnSample s = draw_sample(scen.design, rng);
        const auto folds = assign_folds(400, 10, rng);
        for (const auto& part : fold_partition(folds, s)) {
            for (int r = 0; r < 20; ++r) {
                const auto ind = redraw_fold(scen.design, part, rng);
                Index size = 0;
                for (auto v : ind) size += v;
                EXPECT_EQ(size, part.n_k());
                if (kind == DesignKind::stratified) {
                    const auto& d = std::get<StratifiedDesign>(scen.design);
                    std::vector<Index> before(4, 0), after(4, 0);
                    for (Index i : part.sampled) ++before[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1)];
                    for (std::size_t u = 0; u < ind.size(); ++u) {
                        if (ind[u]) ++after[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(part.units[u])] - 1)];
                    }
                    EXPECT_EQ(before, after);
                }
            }
        }
    }
}

TEST(Fluctuation, ZeroArrayBoundTrivially) {
    Rng rng(6);
    const DesignSpec d = SrsworDesign{200, 60};
    const DrawnSample s = draw_sample(d, rng);
    const auto folds = assign_folds(200, 5, rng);
    std::vector<Vector> arrays;
    for (Index sz : folds.fold_sizes) arrays.push_back(Vector::Zero(sz));
    for (const auto& r : fluctuation_check(d, first_order_probs(d), folds, s, arrays, 100, rng)) {
        EXPECT_EQ(r.lhs, 0.0);
        EXPECT_TRUE(r.satisfied);
        EXPECT_LE(r.lhs, r.rhs);
    }
}

TEST(Fluctuation, ConstantArraySrsworMatchesHypergeometric) {
    Rng rng(7);
    const DesignSpec d = SrsworDesign{400, 120};
    const DrawnSample s = draw_sample(d, rng);
    const auto folds = assign_folds(400, 10, rng);
    const auto arrays = make_a_arrays(ArrayKind::constant, folds, s, rng);
    for (const auto& r : fluctuation_check(d, first_order_probs(d), folds, s, arrays, 500, rng)) {
        const double exact = srs_second_moment(Vector::Ones(r.N_k), r.n_k, 0.3);
        EXPECT_LE(std::abs(r.lhs - exact), 3.0 * r.mc_se + 1e-12 * exact);
        EXPECT_LE(r.lhs, r.rhs);
    }
}

TEST(Fluctuation, NormalArraySrsworMatchesHypergeometric) {
    Rng rng(8);
    const DesignSpec d = SrsworDesign{400, 120};
    const DrawnSample s = draw_sample(d, rng);
    const auto folds = assign_folds(400, 10, rng);
    const auto arrays = make_a_arrays(ArrayKind::normal, folds, s, rng);
    const auto reports = fluctuation_check(d, first_order_probs(d), folds, s, arrays, 4000, rng);
    int outside = 0;
    for (std::size_t k = 0; k < reports.size(); ++k) {
        const auto& r = reports[k];
        const double exact = srs_second_moment(arrays[k], r.n_k, 0.3);
        if (std::abs(r.lhs - exact) > 3.0 * r.mc_se) ++outside;
        EXPECT_LE(std::abs(r.lhs - exact), 4.5 * r.mc_se);
        EXPECT_LE(exact, r.multiplier * r.mean_square_a * (1 + 1e-12));
    }
    EXPECT_LE(outside, 1);
}

TEST(Fluctuation, CEtaQuantileAndSlope) {
    std::vector<BoundReport> reps(11);
    for (int i = 0; i < 11; ++i) {
        reps[static_cast<std::size_t>(i)].C_min = i;
        reps[static_cast<std::size_t>(i)].mean_square_a = 1.0;
    }
    EXPECT_NEAR(c_eta_estimate(reps, 0.1), 9.0, 1e-12);
    const std::vector<double> x{100, 200, 400}, y{0.03, 0.015, 0.0075};
    EXPECT_NEAR(loglog_slope(x, y), -1.0, 1e-12);
}

TEST(Fluctuation, ArrayKindsHaveFoldLengths) {
    PopulationConfig pc;
    pc.N = 300;
    pc.p = 5;
    pc.s = 5;
    const Population pop = generate_population(pc);
    Rng rng(9);
    const DrawnSample s = draw_sample(SrsworDesign{300, 90}, rng);
    const auto folds = assign_folds(300, 5, rng);
    for (ArrayKind k : {ArrayKind::constant, ArrayKind::normal, ArrayKind::heavy_tailed, ArrayKind::oracle_error}) {
        const auto arrays = make_a_arrays(k, folds, s, rng, &pop);
        ASSERT_EQ(arrays.size(), 5u);
        for (int f = 0; f < 5; ++f) EXPECT_EQ(arrays[static_cast<std::size_t>(f)].size(), folds.fold_sizes[static_cast<std::size_t>(f)]);
    }
    EXPECT_THROW(make_a_arrays(ArrayKind::oracle_error, folds, s, rng), std::invalid_argument);
}

TEST(ConditionalMean, PoissonRemainderCentred) {
    PopulationConfig pc;
    pc.N = 400;
    pc.p = 10;
    const Population pop = generate_population(pc);
    DesignConfig dc;
    dc.kind = DesignKind::poisson;
    dc.n = 120;
    const Scenario scen = build_scenario(dc, pop);
    Rng rng(10);
    const DrawnSample s = draw_sample(scen.design, rng);
    const auto rep = sreg::sreg(pop.x, s, scen.weights, pop.y(s.indices), FitSpec::ols(), assign_folds(400, 5, rng), rng);
    const auto moments = conditional_remainder_mean(scen.design, scen.weights, *rep.internals, s, pop.m_oracle, 2000, rng);
    int outside = 0;
    for (const auto& m : moments) {
        EXPECT_LE(std::abs(m.mean), 4.0 * m.mc_se);
        if (std::abs(m.mean) > 3.0 * m.mc_se) ++outside;
    }
    EXPECT_LE(outside, 1);
}

TEST(Equivalence, InterceptOnlyAndGrowingP) {
    PopulationConfig pc;
    pc.N = 400;
    const auto rows = equivalence_study(
        pc, [](const Population& pop) -> DesignSpec {
            DesignConfig dc;
            dc.n = 120;
            return build_scenario(dc, pop).design;
        },
        {0, 60}, 20, 10, 3);
    ASSERT_EQ(rows.size(), 4u);
    double greg0 = 0, greg60 = 0, sreg60 = 0;
    for (const auto& r : rows) {
        if (r.p == 0 && r.estimator == "GREG") greg0 = r.mean;
        if (r.p == 60 && r.estimator == "GREG") greg60 = r.mean;
        if (r.p == 60 && r.estimator == "SREG") sreg60 = r.mean;
    }
    EXPECT_GT(greg60, greg0);
    EXPECT_GT(greg60, 0.0);
    EXPECT_GT(sreg60, 0.0);
}
