#include "sreg/config.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace sreg;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test");
}

}  // namespace

TEST(Config, PresetsMatchPublishedSettings) {
    const RunConfig s = load_config("paper_stratified");
    EXPECT_EQ(s.experiment.population.N, 1000);
    EXPECT_EQ(s.experiment.population.p, 90);
    EXPECT_EQ(s.experiment.design.kind, DesignKind::stratified);
    EXPECT_EQ(s.experiment.design.n, 300);
    EXPECT_EQ(s.experiment.B, 500);
    EXPECT_EQ(s.experiment.K, 10);
    EXPECT_EQ(s.experiment.estimators.size(), 7u);
    EXPECT_EQ(load_config("paper_rejective").experiment.design.kind, DesignKind::rejective);
    const RunConfig sw = load_config("paper_sweep_r");
    ASSERT_TRUE(sw.sweep.has_value());
    EXPECT_EQ(sw.sweep->axis, SweepAxis::r);
}

TEST(Config, DefaultsFillMissingKeys) {
    const RunConfig rc = parse("[experiment]\nB = 3\n");
    EXPECT_EQ(rc.experiment.B, 3);
    EXPECT_EQ(rc.experiment.population.N, 1000);
    EXPECT_FALSE(rc.sweep.has_value());
}

TEST(Config, UnknownKeysAndSectionsAreErrors) {
    EXPECT_THROW(parse("[population]\nNN = 3\n"), UsageError);
    EXPECT_THROW(parse("[populaton]\nN = 3\n"), UsageError);
    EXPECT_THROW(parse("N = 3\n"), UsageError);
}

TEST(Config, MalformedValuesAreErrors) {
    EXPECT_THROW(parse("[population]\nN = 1e3x\n"), UsageError);
    EXPECT_THROW(parse("[design]\nkind = cluster\n"), UsageError);
    EXPECT_THROW(parse("[design]\nexact_rejective_pi = maybe\n"), UsageError);
    EXPECT_THROW(parse("[experiment]\nB = 0\n"), UsageError);
    EXPECT_THROW(parse("[experiment]\nestimators = HT,Bogus\n"), UsageError);
    EXPECT_THROW(load_config("/nonexistent/file.ini"), UsageError);
}

TEST(Config, RenderRoundTrips) {
    RunConfig rc = load_config("paper_sweep_p");
    rc.experiment.population.r = -0.123456789012345;
    rc.experiment.master_seed = 987654321987ULL;
    const std::string text = render_config(rc);
    const RunConfig back = parse(text);
    EXPECT_EQ(render_config(back), text);
    EXPECT_EQ(back.experiment.population.r, rc.experiment.population.r);
    EXPECT_EQ(back.experiment.master_seed, rc.experiment.master_seed);
}

TEST(Config, SampleConfigsParse) {
    for (const char* name : {"paper_stratified", "paper_rejective", "paper_sweep_p", "paper_sweep_r", "smoke"}) {
        const std::string path = std::string(SREG_GOLDEN_DIR) + "/../../samples/configs/" + name + ".ini";
        EXPECT_NO_THROW(load_config(path)) << path;
    }
    // the shipped preset files agree with the built-in presets
    for (const char* name : {"paper_stratified", "paper_rejective", "paper_sweep_p", "paper_sweep_r"}) {
        const std::string path = std::string(SREG_GOLDEN_DIR) + "/../../samples/configs/" + name + ".ini";
        EXPECT_EQ(render_config(load_config(path)), render_config(load_config(name)));
    }
}
