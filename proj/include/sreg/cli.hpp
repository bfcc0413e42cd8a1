#pragma once

#include "sreg/bound_study.hpp"
#include "sreg/config.hpp"
#include "sreg/csv.hpp"
#include "sreg/estimators.hpp"
#include "sreg/simharness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>
#include <variant>

namespace sreg::cli {

namespace fs = std::filesystem;

/// Output directory used when --out is absent.
inline constexpr const char* kOutDirEnv = "SREG_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "sreg-out";

/// A cell is empty (missing), a real, an integer or text.
using Cell = std::variant<std::monostate, double, long long, std::string>;

struct OutTable {
    std::string name;  // file stem
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;
};

inline Cell opt(const std::optional<double>& v) { return v ? Cell{*v} : Cell{}; }
inline Cell finite(double v) { return std::isfinite(v) ? Cell{v} : Cell{}; }

inline std::string cell_text(const Cell& c) {
    struct {
        std::string operator()(std::monostate) const { return ""; }
        std::string operator()(double v) const { return csv::format(v); }
        std::string operator()(long long v) const { return std::to_string(v); }
        std::string operator()(const std::string& v) const {
            if (v.find_first_of(",\"\n") == std::string::npos) return v;
            std::string q = "\"";
            for (char ch : v) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            return q + "\"";
        }
    } visitor;
    return std::visit(visitor, c);
}

inline nlohmann::json cell_json(const Cell& c) {
    struct {
        nlohmann::json operator()(std::monostate) const { return nullptr; }
        nlohmann::json operator()(double v) const { return v; }
        nlohmann::json operator()(long long v) const { return v; }
        nlohmann::json operator()(const std::string& v) const { return v; }
    } visitor;
    return std::visit(visitor, c);
}

/// Writes <name>.csv and, when requested, <name>.json (array of records).
inline void write_table(const fs::path& dir, const OutTable& t, bool json) {
    {
        csv::Writer w((dir / (t.name + ".csv")).string());
        w.row(t.header);
        std::vector<std::string> cells;
        for (const auto& r : t.rows) {
            cells.clear();
            for (const auto& c : r) cells.push_back(cell_text(c));
            w.row(cells);
        }
    }
    if (json) {
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& r : t.rows) {
            nlohmann::json rec = nlohmann::json::object();
            for (std::size_t j = 0; j < t.header.size(); ++j) rec[t.header[j]] = cell_json(r[j]);
            doc.push_back(std::move(rec));
        }
        std::ofstream out(dir / (t.name + ".json"));
        if (!out) throw Error("cannot write " + (dir / (t.name + ".json")).string());
        out << doc.dump(2) << '\n';
    }
}

inline fs::path resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
    return kDefaultOutDir;
}

inline void make_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

inline OutTable metrics_table(const MetricsTable& m) {
    OutTable t{"metrics", {"estimator", "bias", "se", "rmse", "rb", "cr", "b_effective", "seed"}, {}};
    for (const auto& r : m.rows) {
        t.rows.push_back({r.estimator, r.bias, finite(r.se), r.rmse, opt(r.rb), opt(r.cr),
                          static_cast<long long>(r.b_effective), static_cast<long long>(m.seed)});
    }
    return t;
}

inline OutTable metrics_mc_se_table(const MetricsTable& m) {
    OutTable t{"metrics_mc_se", {"estimator", "bias_mc_se", "se_mc_se", "rmse_mc_se", "rb_mc_se", "cr_mc_se"}, {}};
    for (const auto& r : m.rows) {
        t.rows.push_back({r.estimator, finite(r.bias_mc_se), finite(r.se_mc_se), finite(r.rmse_mc_se),
                          opt(r.rb_mc_se), opt(r.cr_mc_se)});
    }
    return t;
}

inline OutTable replications_table(const std::vector<ReplicationRecord>& recs) {
    OutTable t{"replications",
               {"replication", "estimator", "truth", "estimate", "variance", "ci_low", "ci_high", "covered",
                "n_realized"},
               {}};
    for (const auto& r : recs) {
        const bool has_ci = r.ci.has_value();
        t.rows.push_back({static_cast<long long>(r.replication + 1), r.estimator, r.truth, r.estimate,
                          opt(r.variance), has_ci ? Cell{r.ci->low} : Cell{}, has_ci ? Cell{r.ci->high} : Cell{},
                          has_ci ? Cell{static_cast<long long>(r.covered() ? 1 : 0)} : Cell{},
                          static_cast<long long>(r.n_realized)});
    }
    return t;
}

// ---------------------------------------------------------------------------
// Shared option handling
// ---------------------------------------------------------------------------

struct CommonOptions {
    std::string out;
    bool json = false;
    bool verbose = false;
};

struct ExperimentOverrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> B;
    std::optional<int> K;
    std::optional<std::string> design;
    std::optional<std::string> estimators;
    std::optional<int> threads;
    std::optional<std::string> population_mode;
    bool exact_rejective_pi = false;
    bool export_population = false;
};

inline void add_common(CLI::App* cmd, CommonOptions& c) {
    cmd->add_option("--out", c.out, std::string("Output directory (default: $") + kOutDirEnv + " or " +
                                        kDefaultOutDir + ")");
    cmd->add_flag("--json", c.json, "Also write every table as JSON");
    cmd->add_flag("-v,--verbose", c.verbose, "Progress and failure details on stderr");
}

inline void add_experiment_overrides(CLI::App* cmd, ExperimentOverrides& o) {
    cmd->add_option("--config", o.config, "Config file or built-in preset name")->required();
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--b", o.B, "Replications");
    cmd->add_option("--k", o.K, "Folds");
    cmd->add_option("--design", o.design, "stratified | rejective | srswor | poisson");
    cmd->add_option("--estimators", o.estimators, "Comma-separated estimator list");
    cmd->add_option("--threads", o.threads, "Worker threads");
    cmd->add_option("--population-mode", o.population_mode, "fixed | per-replication");
    cmd->add_flag("--exact-rejective-pi", o.exact_rejective_pi, "Weight rejective samples by exact inclusion probabilities");
    cmd->add_flag("--export-population", o.export_population, "Write the fixed population as population.csv");
}

inline RunConfig resolve_config(const ExperimentOverrides& o) {
    RunConfig rc = load_config(o.config);
    auto& ex = rc.experiment;
    if (o.seed) ex.master_seed = *o.seed;
    if (o.B) ex.B = *o.B;
    if (o.K) ex.K = *o.K;
    if (o.threads) ex.threads = *o.threads;
    try {
        if (o.design) ex.design.kind = parse_design_kind(*o.design);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.estimators) ex.estimators = config_detail::split_list(*o.estimators);
    if (o.population_mode) {
        if (*o.population_mode == "fixed") ex.population_mode = PopulationMode::fixed;
        else if (*o.population_mode == "per-replication") ex.population_mode = PopulationMode::per_replication;
        else throw UsageError("--population-mode must be fixed or per-replication");
    }
    if (o.exact_rejective_pi) ex.design.exact_rejective_pi = true;
    try {
        ex.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return rc;
}

inline void write_resolved_config(const fs::path& dir, const RunConfig& rc) {
    std::ofstream out(dir / "config.ini");
    if (!out) throw Error("cannot write " + (dir / "config.ini").string());
    out << render_config(rc);
}

inline void export_population(const fs::path& dir, const ExperimentConfig& ex) {
    const Population pop = generate_population(ex.population);
    std::optional<StrataLabels> strata;
    if (ex.design.kind == DesignKind::stratified) strata = assign_strata(pop, ex.design.strata);
    write_population_csv((dir / "population.csv").string(), pop, strata);
}

inline void print_metrics(std::ostream& out, const MetricsTable& m) {
    out << std::left << std::setw(12) << "estimator" << std::right << std::setw(11) << "bias" << std::setw(11)
        << "se" << std::setw(11) << "rmse" << std::setw(8) << "rb" << std::setw(7) << "cr" << '\n';
    out << std::fixed;
    for (const auto& r : m.rows) {
        out << std::left << std::setw(12) << r.estimator << std::right << std::setprecision(2) << std::setw(11)
            << r.bias << std::setw(11) << r.se << std::setw(11) << r.rmse;
        if (r.rb) out << std::setw(8) << *r.rb; else out << std::setw(8) << "-";
        if (r.cr) out << std::setw(7) << *r.cr; else out << std::setw(7) << "-";
        out << '\n';
    }
    out << std::defaultfloat;
    if (m.failures > 0) out << m.failures << " of " << m.replications_requested << " replications failed\n";
    if (m.capped_units > 0) out << m.capped_units << " units held at the probability cap\n";
    if (m.clamped_joint_pairs > 0) out << m.clamped_joint_pairs << " joint probabilities clamped\n";
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_simulate(const ExperimentOverrides& o, const CommonOptions& c, std::ostream& out, std::ostream& err) {
    const RunConfig rc = resolve_config(o);
    const fs::path dir = resolve_out_dir(c.out);
    const ExperimentResult res = run_experiment(rc.experiment);
    if (c.verbose) {
        for (const auto& msg : res.metrics.failure_messages) err << "warning: " << msg << '\n';
    }
    make_out_dir(dir);
    write_resolved_config(dir, rc);
    write_table(dir, metrics_table(res.metrics), c.json);
    write_table(dir, metrics_mc_se_table(res.metrics), c.json);
    write_table(dir, replications_table(res.records), c.json);
    if (o.export_population) export_population(dir, rc.experiment);
    print_metrics(out, res.metrics);
    out << "wrote " << dir.string() << '\n';
    return 0;
}

struct SweepOptions {
    std::optional<std::string> axis;
    std::optional<std::string> grid;
};

inline int cmd_sweep(const ExperimentOverrides& o, const SweepOptions& s, const CommonOptions& c, std::ostream& out,
                     std::ostream& err) {
    RunConfig rc = resolve_config(o);
    SweepConfig sc = rc.sweep.value_or(SweepConfig{});
    if (s.axis) {
        if (*s.axis == "p") sc.axis = SweepAxis::p;
        else if (*s.axis == "r") sc.axis = SweepAxis::r;
        else throw UsageError("--axis must be p or r");
    }
    if (s.grid) {
        sc.grid.clear();
        for (const auto& g : config_detail::split_list(*s.grid)) sc.grid.push_back(config_detail::to_double("--grid", g));
    }
    if (sc.grid.empty()) throw UsageError("sweep needs a grid (--grid or [sweep] grid)");
    rc.sweep = sc;
    const fs::path dir = resolve_out_dir(c.out);

    OutTable t{"sweep",
               {"axis", "value", "estimator", "bias", "bias_mc_se", "se", "rmse", "rb", "cr", "b_effective", "seed"},
               {}};
    const std::string axis = sc.axis == SweepAxis::p ? "p" : "r";
    for (double v : sc.grid) {
        if (c.verbose) err << "sweep " << axis << " = " << csv::format(v) << '\n';
        for (const auto& row : sweep(rc.experiment, sc.axis, {v})) {
            const auto& m = row.metrics;
            t.rows.push_back({axis, v, m.estimator, m.bias, finite(m.bias_mc_se), finite(m.se), m.rmse, opt(m.rb),
                              opt(m.cr), static_cast<long long>(m.b_effective),
                              static_cast<long long>(rc.experiment.master_seed)});
        }
    }
    make_out_dir(dir);
    write_resolved_config(dir, rc);
    write_table(dir, t, c.json);
    out << "wrote " << (dir / "sweep.csv").string() << " (" << t.rows.size() << " rows)\n";
    return 0;
}

struct BoundOptions {
    std::optional<std::string> config;
    std::string designs = "srswor,stratified,rejective";
    std::string n_grid = "400,800,1600";
    double fraction = 0.3;
    int K = 10;
    int outer = 5;
    int inner_reps = 2000;
    std::string a_kind = "normal";
    std::uint64_t seed = 1;
};

inline ArrayKind parse_array_kind(const std::string& s) {
    if (s == "constant") return ArrayKind::constant;
    if (s == "normal") return ArrayKind::normal;
    if (s == "heavy-tailed") return ArrayKind::heavy_tailed;
    if (s == "oracle-error") return ArrayKind::oracle_error;
    throw UsageError("--a-kind must be constant, normal, heavy-tailed or oracle-error");
}

inline int cmd_verify_bounds(const BoundOptions& b, const CommonOptions& c, std::ostream& out, std::ostream& err) {
    BoundStudyConfig cfg;
    if (b.config) {
        const RunConfig rc = load_config(*b.config);
        cfg.population = rc.experiment.population;
        cfg.design = rc.experiment.design;
    }
    std::vector<DesignKind> designs;
    try {
        for (const auto& d : config_detail::split_list(b.designs)) designs.push_back(parse_design_kind(d));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (designs.empty()) throw UsageError("--designs must name at least one design");
    cfg.N_grid.clear();
    for (const auto& n : config_detail::split_list(b.n_grid)) cfg.N_grid.push_back(config_detail::to_int("--n-grid", n));
    if (cfg.N_grid.empty()) throw UsageError("--n-grid must not be empty");
    if (!(b.fraction > 0.0 && b.fraction < 1.0)) throw UsageError("--fraction must lie in (0, 1)");
    if (b.K < 2) throw UsageError("--k must be at least 2");
    if (b.outer < 1) throw UsageError("--outer must be at least 1");
    if (b.inner_reps < 100) throw UsageError("--inner-reps must be at least 100");
    cfg.fraction = b.fraction;
    cfg.K = b.K;
    cfg.outer = b.outer;
    cfg.inner_reps = b.inner_reps;
    cfg.a_kind = parse_array_kind(b.a_kind);
    cfg.seed = b.seed;
    const fs::path dir = resolve_out_dir(c.out);
    if (c.verbose) err << "running " << designs.size() * cfg.N_grid.size() << " design/N cells\n";

    const BoundStudy study = bound_study(cfg, designs);

    OutTable rows{"bounds",
                  {"design", "fold", "N", "n", "K", "lhs", "rhs", "C_min", "mc_se", "outer", "N_k", "n_k",
                   "mean_square_a", "multiplier", "satisfied"},
                  {}};
    for (const auto& r : study.rows) {
        const auto& rep = r.report;
        rows.rows.push_back({to_string(r.design), static_cast<long long>(rep.fold), static_cast<long long>(r.N),
                             static_cast<long long>(rep.n), static_cast<long long>(r.K), rep.lhs, finite(rep.rhs),
                             finite(rep.C_min), rep.mc_se, static_cast<long long>(r.outer),
                             static_cast<long long>(rep.N_k), static_cast<long long>(rep.n_k), rep.mean_square_a,
                             finite(rep.multiplier), static_cast<long long>(rep.satisfied ? 1 : 0)});
    }
    OutTable cells{"bounds_summary", {"design", "N", "n", "K", "c_eta", "mean_scaled_lhs"}, {}};
    for (const auto& cl : study.cells) {
        cells.rows.push_back({to_string(cl.design), static_cast<long long>(cl.N), static_cast<long long>(cl.n),
                              static_cast<long long>(cl.K), finite(cl.c_eta), cl.mean_scaled_lhs});
    }
    OutTable scaling{"bounds_scaling", {"design", "loglog_slope", "c_eta_max_rel_dev"}, {}};
    for (const auto& s : study.scaling) {
        scaling.rows.push_back({to_string(s.design), finite(s.loglog_slope), finite(s.c_eta_max_rel_dev)});
        out << std::left << std::setw(12) << to_string(s.design) << "slope " << csv::format(s.loglog_slope)
            << "  c_eta spread " << csv::format(s.c_eta_max_rel_dev) << '\n';
    }
    make_out_dir(dir);
    write_table(dir, rows, c.json);
    write_table(dir, cells, c.json);
    write_table(dir, scaling, c.json);
    out << "wrote " << dir.string() << '\n';
    return 0;
}

struct EstimateOptions {
    std::string population;
    std::string sample;
    std::string design;
    std::optional<std::string> joint;
    std::string estimators = "HT,GREG,SREG";
    int K = 10;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::string weighting = "unweighted";
};

/// Inputs of the estimate subcommand after validation.
struct EstimateInputs {
    std::vector<std::string> ids;  // population order
    Matrix x;
    std::optional<std::vector<std::string>> strata;
    DrawnSample sample;
    Vector y_sampled;  // aligned with sample.indices
    Vector pi;         // NaN off the sample
};

inline EstimateInputs read_estimate_inputs(const EstimateOptions& e) {
    EstimateInputs in;
    const csv::Table pop = csv::read(e.population);
    const int id_col = pop.require_column("unit_id", e.population);
    std::vector<std::pair<int, int>> xcols;  // (suffix, column)
    for (std::size_t j = 0; j < pop.header.size(); ++j) {
        const auto& h = pop.header[j];
        if (h.rfind("x_", 0) == 0) {
            int suffix = 0;
            const auto res = std::from_chars(h.data() + 2, h.data() + h.size(), suffix);
            if (res.ec != std::errc() || res.ptr != h.data() + h.size()) {
                throw Error(e.population + ": cannot read auxiliary column '" + h + "'");
            }
            xcols.emplace_back(suffix, static_cast<int>(j));
        }
    }
    std::sort(xcols.begin(), xcols.end());
    if (xcols.empty()) throw Error(e.population + ": no auxiliary columns x_1..x_p");
    const auto N = static_cast<Index>(pop.rows.size());
    if (N == 0) throw Error(e.population + ": no units");
    in.x.resize(N, static_cast<Index>(xcols.size()));
    std::unordered_map<std::string, Index> position;
    const int stratum_col = pop.column("stratum");
    if (stratum_col >= 0) in.strata.emplace();
    for (Index i = 0; i < N; ++i) {
        const auto& row = pop.rows[static_cast<std::size_t>(i)];
        in.ids.push_back(row[static_cast<std::size_t>(id_col)]);
        if (!position.emplace(in.ids.back(), i).second) throw Error(e.population + ": duplicate unit_id " + in.ids.back());
        for (std::size_t j = 0; j < xcols.size(); ++j) {
            in.x(i, static_cast<Index>(j)) =
                csv::parse_double(row[static_cast<std::size_t>(xcols[j].second)], e.population);
        }
        if (in.strata) in.strata->push_back(row[static_cast<std::size_t>(stratum_col)]);
    }

    const csv::Table smp = csv::read(e.sample);
    const int sid = smp.require_column("unit_id", e.sample);
    const int sy = smp.require_column("y", e.sample);
    const int spi = smp.require_column("pi", e.sample);
    std::vector<std::string> foreign;
    std::size_t n_foreign = 0;
    std::vector<std::pair<Index, std::pair<double, double>>> units;  // (index, (y, pi))
    for (std::size_t r = 0; r < smp.rows.size(); ++r) {
        const auto& row = smp.rows[r];
        const auto& id = row[static_cast<std::size_t>(sid)];
        auto it = position.find(id);
        if (it == position.end()) {
            if (foreign.size() < 10) foreign.push_back(id);
            ++n_foreign;
            continue;
        }
        const double y = csv::parse_double(row[static_cast<std::size_t>(sy)], e.sample);
        const double p = csv::parse_double(row[static_cast<std::size_t>(spi)], e.sample);
        if (!(p > 0.0 && p <= 1.0)) {
            throw Error(e.sample + ": inclusion probability of unit " + id + " is " + row[static_cast<std::size_t>(spi)] +
                        ", outside (0, 1]");
        }
        units.push_back({it->second, {y, p}});
    }
    if (n_foreign > 0) {
        std::string list;
        for (std::size_t t = 0; t < foreign.size(); ++t) list += (t ? ", " : "") + foreign[t];
        throw Error(e.sample + ": " + std::to_string(n_foreign) + " unit_id(s) not in the population: " + list +
                    (n_foreign > foreign.size() ? ", ..." : ""));
    }
    if (units.empty()) throw Error(e.sample + ": no sampled units");
    std::sort(units.begin(), units.end());
    for (std::size_t t = 1; t < units.size(); ++t) {
        if (units[t].first == units[t - 1].first) {
            throw Error(e.sample + ": duplicate unit_id " + in.ids[static_cast<std::size_t>(units[t].first)]);
        }
    }
    IndexSet idx;
    in.y_sampled.resize(static_cast<Index>(units.size()));
    in.pi = Vector::Constant(N, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < units.size(); ++t) {
        idx.push_back(units[t].first);
        in.y_sampled(static_cast<Index>(t)) = units[t].second.first;
        in.pi(units[t].first) = units[t].second.second;
    }
    in.sample = DrawnSample::from_indices(N, idx);
    return in;
}

/// Pairwise file with columns unit_id_i, unit_id_j, pi_ij (either order).
inline JointProbs read_pairwise_joint(const std::string& path, const EstimateInputs& in) {
    const csv::Table t = csv::read(path);
    const int ci = t.require_column("unit_id_i", path);
    const int cj = t.require_column("unit_id_j", path);
    const int cp = t.require_column("pi_ij", path);
    std::unordered_map<std::string, Index> position;
    for (std::size_t i = 0; i < in.ids.size(); ++i) position.emplace(in.ids[i], static_cast<Index>(i));
    const auto N = static_cast<std::uint64_t>(in.ids.size());
    auto table = std::make_shared<std::unordered_map<std::uint64_t, double>>();
    for (const auto& row : t.rows) {
        auto a = position.find(row[static_cast<std::size_t>(ci)]);
        auto b = position.find(row[static_cast<std::size_t>(cj)]);
        if (a == position.end() || b == position.end()) {
            throw Error(path + ": unit_id not in the population: " +
                        (a == position.end() ? row[static_cast<std::size_t>(ci)] : row[static_cast<std::size_t>(cj)]));
        }
        const double v = csv::parse_double(row[static_cast<std::size_t>(cp)], path);
        if (!(v >= 0.0 && v <= 1.0)) throw Error(path + ": joint probability outside [0, 1]");
        const auto lo = static_cast<std::uint64_t>(std::min(a->second, b->second));
        const auto hi = static_cast<std::uint64_t>(std::max(a->second, b->second));
        (*table)[lo * N + hi] = v;
    }
    return JointProbs(in.pi, [table, N](Index i, Index j) {
        const auto lo = static_cast<std::uint64_t>(std::min(i, j));
        const auto hi = static_cast<std::uint64_t>(std::max(i, j));
        auto it = table->find(lo * N + hi);
        return it == table->end() ? 0.0 : it->second;
    });
}

inline JointProbs declared_joint(const EstimateOptions& e, const EstimateInputs& in) {
    const Index N = in.sample.population_size();
    const Index n = in.sample.n_realized();
    if (e.design == "srswor") {
        if (e.joint) throw UsageError("--joint is only used with --design pairwise");
        if (n >= N) return JointProbs::independent(Vector::Ones(N));
        return joint_probs(SrsworDesign{N, n});
    }
    if (e.design == "poisson") {
        if (e.joint) throw UsageError("--joint is only used with --design pairwise");
        return JointProbs::independent(in.pi);
    }
    if (e.design == "stratified") {
        if (e.joint) throw UsageError("--joint is only used with --design pairwise");
        if (!in.strata) throw Error(e.population + ": --design stratified needs a stratum column");
        std::map<std::string, int> label;
        for (const auto& s : *in.strata) label.emplace(s, 0);
        int h = 0;
        for (auto& [k, v] : label) v = ++h;
        StratifiedDesign d;
        d.strata.sizes.assign(label.size(), 0);
        d.n_h.assign(label.size(), 0);
        for (const auto& s : *in.strata) {
            const int l = label[s];
            d.strata.labels.push_back(l);
            ++d.strata.sizes[static_cast<std::size_t>(l - 1)];
        }
        for (Index i : in.sample.indices) ++d.n_h[static_cast<std::size_t>(d.strata.labels[static_cast<std::size_t>(i)] - 1)];
        return joint_probs(d);
    }
    if (e.design == "pairwise") {
        if (!e.joint) throw UsageError("--design pairwise needs --joint FILE");
        return read_pairwise_joint(*e.joint, in);
    }
    throw UsageError("--design must be srswor, stratified, poisson or pairwise");
}

inline int cmd_estimate(const EstimateOptions& e, const CommonOptions& c, std::ostream& out, std::ostream&) {
    const auto names = config_detail::split_list(e.estimators);
    static const std::set<std::string> allowed{"HT", "GREG", "SREG", "GREG.Lasso", "SREG.Lasso"};
    if (names.empty()) throw UsageError("--estimators must not be empty");
    for (const auto& n : names) {
        if (!allowed.count(n)) throw UsageError("estimator '" + n + "' is not available for real data (HT, GREG, SREG, GREG.Lasso, SREG.Lasso)");
    }
    if (e.K < 2) throw UsageError("--k must be at least 2");
    if (!(e.level > 0.0 && e.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
    Weighting weighting;
    if (e.weighting == "unweighted") weighting = Weighting::unweighted;
    else if (e.weighting == "inverse-probability") weighting = Weighting::inverse_probability;
    else throw UsageError("--weighting must be unweighted or inverse-probability");
    if (e.design != "srswor" && e.design != "stratified" && e.design != "poisson" && e.design != "pairwise") {
        throw UsageError("--design must be srswor, stratified, poisson or pairwise");
    }
    const fs::path dir = resolve_out_dir(c.out);

    const EstimateInputs in = read_estimate_inputs(e);
    const JointProbs joint = declared_joint(e, in);
    FitSpec ols = FitSpec::ols();
    ols.weighting = weighting;
    FitSpec lasso = FitSpec::lasso_cv();
    lasso.weighting = weighting;

    Rng fold_rng = substream(e.seed, Stream::folds, 0);
    std::optional<FoldAssignment> folds;
    auto get_folds = [&]() -> const FoldAssignment& {
        if (!folds) folds = assign_folds(in.sample.population_size(), e.K, fold_rng);
        return *folds;
    };

    OutTable t{"estimates", {"estimator", "point", "variance", "ci_low", "ci_high", "n", "N"}, {}};
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto& name = names[k];
        Rng rng = substream(e.seed, {static_cast<std::uint64_t>(Stream::fit), 0, k});
        EstimateReport rep;
        if (name == "HT") rep = ht_total(in.sample, in.pi, in.y_sampled);
        else if (name == "GREG") rep = greg(in.x, in.sample, in.pi, in.y_sampled, ols, rng);
        else if (name == "GREG.Lasso") rep = greg(in.x, in.sample, in.pi, in.y_sampled, lasso, rng);
        else if (name == "SREG") rep = sreg(in.x, in.sample, in.pi, in.y_sampled, ols, get_folds(), rng);
        else rep = sreg(in.x, in.sample, in.pi, in.y_sampled, lasso, get_folds(), rng);
        attach_variance(rep, ht_variance_general(rep.residuals, in.sample, in.pi, joint), e.level);
        t.rows.push_back({name, rep.point, opt(rep.variance), rep.ci ? Cell{rep.ci->low} : Cell{},
                          rep.ci ? Cell{rep.ci->high} : Cell{}, static_cast<long long>(in.sample.n_realized()),
                          static_cast<long long>(in.sample.population_size())});
        out << std::left << std::setw(12) << name << csv::format(rep.point);
        if (rep.ci) out << "  [" << csv::format(rep.ci->low) << ", " << csv::format(rep.ci->high) << "]";
        out << '\n';
    }
    make_out_dir(dir);
    write_table(dir, t, c.json);
    out << "wrote " << (dir / "estimates.csv").string() << '\n';
    return 0;
}

/// Entry point. Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Cross-fitted model-assisted survey estimation"};
    app.name("sreg");
    app.require_subcommand(1);

    CommonOptions common;
    ExperimentOverrides sim_opts, sweep_opts;
    SweepOptions sweep_extra;
    BoundOptions bound_opts;
    EstimateOptions est_opts;

    auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
    add_experiment_overrides(simulate, sim_opts);
    add_common(simulate, common);

    auto* sw = app.add_subcommand("sweep", "Run an experiment over a grid of p or r");
    add_experiment_overrides(sw, sweep_opts);
    sw->add_option("--axis", sweep_extra.axis, "p | r");
    sw->add_option("--grid", sweep_extra.grid, "Comma-separated grid values");
    add_common(sw, common);

    auto* vb = app.add_subcommand("verify-bounds", "Check the fold-wise conditional fluctuation bound");
    vb->add_option("--config", bound_opts.config, "Config file or preset for the population settings");
    vb->add_option("--designs", bound_opts.designs, "Comma-separated designs");
    vb->add_option("--n-grid", bound_opts.n_grid, "Comma-separated population sizes");
    vb->add_option("--fraction", bound_opts.fraction, "Sampling fraction n / N");
    vb->add_option("--k", bound_opts.K, "Folds");
    vb->add_option("--outer", bound_opts.outer, "Outer samples per cell");
    vb->add_option("--inner-reps", bound_opts.inner_reps, "Inner redraws per fold");
    vb->add_option("--a-kind", bound_opts.a_kind, "constant | normal | heavy-tailed | oracle-error");
    vb->add_option("--seed", bound_opts.seed, "Seed");
    add_common(vb, common);

    auto* est = app.add_subcommand("estimate", "Estimate a total from population and sample files");
    est->add_option("--population", est_opts.population, "Population CSV (unit_id, x_1..x_p, optional stratum)")->required();
    est->add_option("--sample", est_opts.sample, "Sample CSV (unit_id, y, pi)")->required();
    est->add_option("--design", est_opts.design, "srswor | stratified | poisson | pairwise")->required();
    est->add_option("--joint", est_opts.joint, "Pairwise CSV (unit_id_i, unit_id_j, pi_ij)");
    est->add_option("--estimators", est_opts.estimators, "Comma-separated: HT, GREG, SREG, GREG.Lasso, SREG.Lasso");
    est->add_option("--k", est_opts.K, "Folds");
    est->add_option("--seed", est_opts.seed, "Seed for folds and tuning");
    est->add_option("--level", est_opts.level, "Confidence level");
    est->add_option("--weighting", est_opts.weighting, "unweighted | inverse-probability");
    add_common(est, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_opts, common, out, err);
        if (sw->parsed()) return cmd_sweep(sweep_opts, sweep_extra, common, out, err);
        if (vb->parsed()) return cmd_verify_bounds(bound_opts, common, out, err);
        if (est->parsed()) return cmd_estimate(est_opts, common, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace sreg::cli
