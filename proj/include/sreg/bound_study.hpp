#pragma once

#include "sreg/diagnostics.hpp"
#include "sreg/scenario.hpp"

#include <cmath>
#include <vector>

namespace sreg {

/// Fold-wise fluctuation check repeated over outer samples and a grid of
/// population sizes at a fixed sampling fraction.
struct BoundStudyConfig {
    PopulationConfig population;  // N is taken from N_grid
    DesignConfig design;          // n is fraction * N
    std::vector<Index> N_grid{400, 800, 1600};
    double fraction = 0.3;
    int K = 10;
    int outer = 5;
    int inner_reps = 2000;
    ArrayKind a_kind = ArrayKind::normal;
    std::uint64_t seed = 1;
    double eta = 0.1;
};

struct BoundRow {
    DesignKind design = DesignKind::srswor;
    Index N = 0;
    int K = 0;
    int outer = 0;  // 1-based outer draw
    BoundReport report;
};

/// One (design, N) cell.
struct BoundCell {
    DesignKind design = DesignKind::srswor;
    Index N = 0;
    Index n = 0;
    int K = 0;
    double c_eta = 0.0;
    double mean_scaled_lhs = 0.0;  // mean of lhs / mean(a^2)
};

/// Behaviour of one design across N.
struct BoundScaling {
    DesignKind design = DesignKind::srswor;
    double loglog_slope = 0.0;       // of mean_scaled_lhs against n
    double c_eta_max_rel_dev = 0.0;  // max |c_eta / mean(c_eta) - 1|
};

struct BoundStudy {
    std::vector<BoundRow> rows;
    std::vector<BoundCell> cells;
    std::vector<BoundScaling> scaling;
};

inline BoundStudy bound_study(const BoundStudyConfig& cfg, const std::vector<DesignKind>& designs) {
    if (!(cfg.fraction > 0.0 && cfg.fraction < 1.0)) throw std::invalid_argument("fraction must lie in (0, 1)");
    if (cfg.outer < 1) throw std::invalid_argument("outer must be at least 1");
    BoundStudy study;
    for (std::size_t d = 0; d < designs.size(); ++d) {
        std::vector<double> ns, lhs, cs;
        for (std::size_t g = 0; g < cfg.N_grid.size(); ++g) {
            PopulationConfig pc = cfg.population;
            pc.N = cfg.N_grid[g];
            const Population pop = generate_population(pc);
            DesignConfig dc = cfg.design;
            dc.kind = designs[d];
            dc.n = static_cast<Index>(std::llround(cfg.fraction * static_cast<double>(pc.N)));
            const Scenario scen = build_scenario(dc, pop);
            const Vector pi = first_order_probs(scen.design);

            std::vector<BoundReport> cell_reports;
            for (int o = 0; o < cfg.outer; ++o) {
                Rng rng = substream(cfg.seed, {static_cast<std::uint64_t>(Stream::inner), static_cast<std::uint64_t>(d),
                                               static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(o)});
                const DrawnSample outer = draw_sample(scen.design, rng);
                const FoldAssignment folds = assign_folds(pc.N, cfg.K, rng);
                const auto arrays = make_a_arrays(cfg.a_kind, folds, outer, rng, &pop);
                for (auto& rep : fluctuation_check(scen.design, pi, folds, outer, arrays, cfg.inner_reps, rng)) {
                    cell_reports.push_back(rep);
                    study.rows.push_back({designs[d], pc.N, cfg.K, o + 1, rep});
                }
            }
            BoundCell cell;
            cell.design = designs[d];
            cell.N = pc.N;
            cell.n = dc.n;
            cell.K = cfg.K;
            cell.c_eta = c_eta_estimate(cell_reports, cfg.eta);
            double acc = 0.0;
            int count = 0;
            for (const auto& r : cell_reports) {
                if (r.mean_square_a > 0.0) {
                    acc += r.lhs / r.mean_square_a;
                    ++count;
                }
            }
            cell.mean_scaled_lhs = count ? acc / count : 0.0;
            study.cells.push_back(cell);
            ns.push_back(static_cast<double>(cell.n));
            lhs.push_back(cell.mean_scaled_lhs);
            cs.push_back(cell.c_eta);
        }
        BoundScaling sc;
        sc.design = designs[d];
        sc.loglog_slope = ns.size() >= 2 ? loglog_slope(ns, lhs) : std::numeric_limits<double>::quiet_NaN();
        double mean_c = 0.0;
        for (double c : cs) mean_c += c;
        mean_c /= static_cast<double>(cs.size());
        for (double c : cs) sc.c_eta_max_rel_dev = std::max(sc.c_eta_max_rel_dev, std::abs(c / mean_c - 1.0));
        study.scaling.push_back(sc);
    }
    return study;
}

}  // namespace sreg
