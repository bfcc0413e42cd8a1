#include "sreg/folds.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace sreg;

TEST(Folds, SmallPopulation) {
    Rng rng(1);
    const FoldAssignment f = assign_folds(10, 10, rng);
    Index total = 0;
    for (Index s : f.fold_sizes) {
        EXPECT_GE(s, 0);
        EXPECT_LE(s, 10);
        total += s;
    }
    EXPECT_EQ(total, 10);
    for (int l : f.labels) {
        EXPECT_GE(l, 0);
        EXPECT_LT(l, 10);
    }
}

TEST(Folds, BinomialConcentration) {
    Rng rng(2);
    const Index N = 100000;
    const FoldAssignment f = assign_folds(N, 10, rng);
    const double tol = 4.0 * std::sqrt(N * 0.1 * 0.9);
    for (Index s : f.fold_sizes) EXPECT_NEAR(static_cast<double>(s), N / 10.0, tol);
}

TEST(Folds, DeterministicBySeed) {
    Rng a(9), b(9);
    EXPECT_EQ(assign_folds(500, 7, a).labels, assign_folds(500, 7, b).labels);
}

TEST(Folds, BalancedSizes) {
    Rng rng(3);
    const FoldAssignment f = assign_folds(103, 10, rng, true);
    for (Index s : f.fold_sizes) EXPECT_TRUE(s == 10 || s == 11);
}

TEST(Folds, RejectsBadK) {
    Rng rng(4);
    EXPECT_THROW(assign_folds(10, 1, rng), std::invalid_argument);
    EXPECT_THROW(assign_folds(10, 11, rng), std::invalid_argument);
}

TEST(Partition, FullSampleAndEmptySample) {
    Rng rng(5);
    const FoldAssignment f = assign_folds(40, 4, rng);
    const auto full = fold_partition(f, DrawnSample::from_indicators(std::vector<std::uint8_t>(40, 1)));
    for (const auto& p : full) EXPECT_EQ(p.units, p.sampled);
    const auto none = fold_partition(f, DrawnSample::from_indicators(std::vector<std::uint8_t>(40, 0)));
    for (const auto& p : none) EXPECT_TRUE(p.sampled.empty());
}

TEST(Partition, SampleSizesAddUp) {
    Rng rng(6);
    const FoldAssignment f = assign_folds(300, 10, rng);
    const DrawnSample s = draw_sample(SrsworDesign{300, 90}, rng);
    Index n = 0, N = 0;
    for (const auto& p : fold_partition(f, s)) {
        n += p.n_k();
        N += p.N_k();
        for (Index i : p.sampled) EXPECT_TRUE(s.contains(i));
    }
    EXPECT_EQ(n, s.n_realized());
    EXPECT_EQ(N, 300);
}
