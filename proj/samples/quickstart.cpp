// Draw one stratified sample from a simulated population and compare the
// plain, model-assisted and cross-fitted estimates of the total of y.
#include "sreg/estimators.hpp"
#include "sreg/popgen.hpp"
#include "sreg/scenario.hpp"

#include <cstdio>

int main() {
    sreg::PopulationConfig pc;
    pc.N = 1000;
    pc.p = 90;
    pc.seed = 42;
    const sreg::Population pop = sreg::generate_population(pc);

    sreg::DesignConfig dc;  // four strata on z, n = 300
    const sreg::Scenario scen = sreg::build_scenario(dc, pop);

    sreg::Rng rng = sreg::substream(7, sreg::Stream::design, 0);
    const sreg::DrawnSample sample = sreg::draw_sample(scen.design, rng);
    const sreg::Vector ys = pop.y(sample.indices);
    const sreg::Vector& pi = scen.weights;

    sreg::Rng fold_rng = sreg::substream(7, sreg::Stream::folds, 0);
    const auto folds = sreg::assign_folds(pop.size(), 10, fold_rng);

    std::vector<sreg::EstimateReport> reports;
    reports.push_back(sreg::ht_total(sample, pi, ys));
    reports.push_back(sreg::greg(pop.x, sample, pi, ys, sreg::FitSpec::ols(), rng));
    reports.push_back(sreg::sreg(pop.x, sample, pi, ys, sreg::FitSpec::ols(), folds, rng));

    std::printf("true total %.2f\n", sreg::population_total(pop.y));
    for (auto& r : reports) {
        sreg::attach_variance(r, sreg::ht_variance_general(r.residuals, sample, pi, scen.joint));
        std::printf("%-5s %10.2f  95%% CI [%.2f, %.2f]\n", r.estimator.c_str(), r.point, r.ci->low, r.ci->high);
    }
}
