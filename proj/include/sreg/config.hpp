#pragma once

#include "sreg/csv.hpp"
#include "sreg/simharness.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sreg {

/// Bad configuration or command line; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SweepConfig {
    SweepAxis axis = SweepAxis::p;
    std::vector<double> grid;
};

struct RunConfig {
    ExperimentConfig experiment;
    std::optional<SweepConfig> sweep;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        return csv::parse_double(trim(v), key);
    } catch (const Error&) {
        throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    long long out = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw UsageError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t out = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw UsageError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
    }
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw UsageError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

inline std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + csv::format(v[i]);
    return out;
}

}  // namespace config_detail

/// Parse sectioned key = value text. Unknown sections or keys are errors.
inline RunConfig parse_config(std::istream& in, const std::string& origin = "config") {
    namespace pt = boost::property_tree;
    using namespace config_detail;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw UsageError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }

    RunConfig rc;
    auto& ex = rc.experiment;
    auto& pop = ex.population;
    auto& des = ex.design;
    std::optional<SweepConfig> sweep;

    for (const auto& [section, body] : tree) {
        if (!body.data().empty()) throw UsageError(origin + ": key '" + section + "' outside any section");
        for (const auto& [key, node] : body) {
            const std::string v = node.data();
            const std::string full = section + "." + key;
            if (section == "population") {
                if (key == "N") pop.N = to_int(full, v);
                else if (key == "p") pop.p = to_int(full, v);
                else if (key == "s") pop.s = to_int(full, v);
                else if (key == "mu") pop.mu = to_double(full, v);
                else if (key == "rho") pop.rho = to_double(full, v);
                else if (key == "sigma2") pop.sigma2 = to_double(full, v);
                else if (key == "r") pop.r = to_double(full, v);
                else if (key == "seed") pop.seed = to_u64(full, v);
                else throw UsageError(origin + ": unknown key '" + full + "'");
            } else if (section == "design") {
                if (key == "kind") {
                    try {
                        des.kind = parse_design_kind(trim(v));
                    } catch (const std::invalid_argument& e) {
                        throw UsageError(origin + ": " + e.what());
                    }
                } else if (key == "n") des.n = to_int(full, v);
                else if (key == "strata") des.strata = static_cast<int>(to_int(full, v));
                else if (key == "fractions") {
                    des.fractions.clear();
                    for (const auto& f : split_list(v)) des.fractions.push_back(to_double(full, f));
                } else if (key == "exact_rejective_pi") des.exact_rejective_pi = to_bool(full, v);
                else if (key == "rejective_joint") {
                    const auto t = trim(v);
                    if (t == "exact") des.rejective_joint = JointMode::exact;
                    else if (t == "approximate") des.rejective_joint = JointMode::approximate;
                    else throw UsageError(origin + ": " + full + " must be exact or approximate");
                } else if (key == "probability_cap") des.probability_cap = to_double(full, v);
                else if (key == "max_attempts") des.max_attempts = static_cast<std::size_t>(to_u64(full, v));
                else throw UsageError(origin + ": unknown key '" + full + "'");
            } else if (section == "experiment") {
                if (key == "K") ex.K = static_cast<int>(to_int(full, v));
                else if (key == "B") ex.B = static_cast<int>(to_int(full, v));
                else if (key == "estimators") ex.estimators = split_list(v);
                else if (key == "master_seed") ex.master_seed = to_u64(full, v);
                else if (key == "threads") ex.threads = static_cast<int>(to_int(full, v));
                else if (key == "population_mode") {
                    const auto t = trim(v);
                    if (t == "fixed") ex.population_mode = PopulationMode::fixed;
                    else if (t == "per-replication") ex.population_mode = PopulationMode::per_replication;
                    else throw UsageError(origin + ": " + full + " must be fixed or per-replication");
                } else if (key == "level") ex.level = to_double(full, v);
                else if (key == "balanced_folds") ex.balanced_folds = to_bool(full, v);
                else if (key == "failure_fraction") ex.failure_fraction = to_double(full, v);
                else throw UsageError(origin + ": unknown key '" + full + "'");
            } else if (section == "fit") {
                if (key == "weighting") {
                    const auto t = trim(v);
                    if (t == "unweighted") ex.weighting = Weighting::unweighted;
                    else if (t == "inverse-probability") ex.weighting = Weighting::inverse_probability;
                    else throw UsageError(origin + ": " + full + " must be unweighted or inverse-probability");
                } else if (key == "standardize") ex.standardize = to_bool(full, v);
                else if (key == "intercept") ex.intercept = to_bool(full, v);
                else if (key == "cv_folds") ex.cv_folds = static_cast<int>(to_int(full, v));
                else if (key == "lambda_grid") ex.lambda_grid = static_cast<int>(to_int(full, v));
                else throw UsageError(origin + ": unknown key '" + full + "'");
            } else if (section == "sweep") {
                if (!sweep) sweep = SweepConfig{};
                if (key == "axis") {
                    const auto t = trim(v);
                    if (t == "p") sweep->axis = SweepAxis::p;
                    else if (t == "r") sweep->axis = SweepAxis::r;
                    else throw UsageError(origin + ": sweep.axis must be p or r");
                } else if (key == "grid") {
                    sweep->grid.clear();
                    for (const auto& g : split_list(v)) sweep->grid.push_back(to_double(full, g));
                } else throw UsageError(origin + ": unknown key '" + full + "'");
            } else {
                throw UsageError(origin + ": unknown section [" + section + "]");
            }
        }
    }
    rc.sweep = sweep;
    try {
        ex.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(origin + ": " + e.what());
    }
    return rc;
}

/// Built-in experiment configurations, looked up by name.
inline const std::map<std::string, std::string>& config_presets() {
    static const std::map<std::string, std::string> presets{
        {"paper_stratified",
         "[population]\nN = 1000\np = 90\ns = 5\nmu = 2\nrho = 0.2\nsigma2 = 1\nr = -0.75\nseed = 20240901\n\n"
         "[design]\nkind = stratified\nn = 300\nstrata = 4\nfractions = 0.15,0.20,0.30,0.35\n\n"
         "[experiment]\nK = 10\nB = 500\nestimators = HT,Diff,GREG.Oracle,GREG,SREG,GREG.Lasso,SREG.Lasso\n"
         "master_seed = 1\n"},
        {"paper_rejective",
         "[population]\nN = 1000\np = 90\ns = 5\nmu = 2\nrho = 0.2\nsigma2 = 1\nr = -0.75\nseed = 20240901\n\n"
         "[design]\nkind = rejective\nn = 300\n\n"
         "[experiment]\nK = 10\nB = 500\nestimators = HT,Diff,GREG.Oracle,GREG,SREG,GREG.Lasso,SREG.Lasso\n"
         "master_seed = 1\n"},
        {"paper_sweep_p",
         "[population]\nN = 1000\np = 90\ns = 5\nmu = 2\nrho = 0.2\nsigma2 = 1\nr = -0.75\nseed = 20240901\n\n"
         "[design]\nkind = stratified\nn = 300\nstrata = 4\nfractions = 0.15,0.20,0.30,0.35\n\n"
         "[experiment]\nK = 10\nB = 500\nestimators = HT,Diff,GREG,SREG\nmaster_seed = 1\n\n"
         "[sweep]\naxis = p\ngrid = 10,30,50,70,90\n"},
        {"paper_sweep_r",
         "[population]\nN = 1000\np = 90\ns = 5\nmu = 2\nrho = 0.2\nsigma2 = 1\nr = -0.75\nseed = 20240901\n\n"
         "[design]\nkind = stratified\nn = 300\nstrata = 4\nfractions = 0.15,0.20,0.30,0.35\n\n"
         "[experiment]\nK = 10\nB = 500\nestimators = HT,Diff,GREG,SREG\nmaster_seed = 1\n\n"
         "[sweep]\naxis = r\ngrid = -0.75,-0.5,-0.25,0,0.25,0.5,0.75\n"},
    };
    return presets;
}

/// Accepts a file path or the name of a built-in preset.
inline RunConfig load_config(const std::string& path_or_preset) {
    const auto& presets = config_presets();
    if (auto it = presets.find(path_or_preset); it != presets.end()) {
        std::istringstream in(it->second);
        return parse_config(in, path_or_preset);
    }
    std::ifstream in(path_or_preset);
    if (!in) throw UsageError("cannot read config '" + path_or_preset + "' (not a file or built-in preset)");
    return parse_config(in, path_or_preset);
}

/// Fully resolved configuration in the same format parse_config reads.
inline std::string render_config(const RunConfig& rc) {
    using config_detail::join;
    const auto& ex = rc.experiment;
    const auto& pop = ex.population;
    const auto& des = ex.design;
    std::ostringstream out;
    out << "[population]\n"
        << "N = " << pop.N << "\np = " << pop.p << "\ns = " << pop.s << "\nmu = " << csv::format(pop.mu)
        << "\nrho = " << csv::format(pop.rho) << "\nsigma2 = " << csv::format(pop.sigma2)
        << "\nr = " << csv::format(pop.r) << "\nseed = " << pop.seed << "\n\n";
    out << "[design]\n"
        << "kind = " << to_string(des.kind) << "\nn = " << des.n << "\nstrata = " << des.strata
        << "\nfractions = " << join(des.fractions)
        << "\nexact_rejective_pi = " << (des.exact_rejective_pi ? "true" : "false")
        << "\nrejective_joint = " << (des.rejective_joint == JointMode::exact ? "exact" : "approximate")
        << "\nprobability_cap = " << csv::format(des.probability_cap) << "\nmax_attempts = " << des.max_attempts
        << "\n\n";
    out << "[experiment]\n"
        << "K = " << ex.K << "\nB = " << ex.B << "\nestimators = " << join(ex.estimators)
        << "\nmaster_seed = " << ex.master_seed << "\nthreads = " << ex.threads << "\npopulation_mode = "
        << (ex.population_mode == PopulationMode::fixed ? "fixed" : "per-replication")
        << "\nlevel = " << csv::format(ex.level) << "\nbalanced_folds = " << (ex.balanced_folds ? "true" : "false")
        << "\nfailure_fraction = " << csv::format(ex.failure_fraction) << "\n\n";
    out << "[fit]\n"
        << "weighting = " << (ex.weighting == Weighting::unweighted ? "unweighted" : "inverse-probability")
        << "\nstandardize = " << (ex.standardize ? "true" : "false")
        << "\nintercept = " << (ex.intercept ? "true" : "false") << "\ncv_folds = " << ex.cv_folds
        << "\nlambda_grid = " << ex.lambda_grid << "\n";
    if (rc.sweep) {
        out << "\n[sweep]\naxis = " << (rc.sweep->axis == SweepAxis::p ? "p" : "r")
            << "\ngrid = " << join(rc.sweep->grid) << "\n";
    }
    return out.str();
}

}  // namespace sreg
