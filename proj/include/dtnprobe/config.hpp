#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dtnprobe/elliptic.hpp"
#include "dtnprobe/errors.hpp"
#include "dtnprobe/grid.hpp"
#include "dtnprobe/nonlinearity.hpp"

namespace dtnprobe {

// Minimal TOML reader covering what run configurations use: [section]
// headers, key = value lines with numbers, booleans, quoted strings and flat
// arrays, and # comments. Serialization writes the same dialect, so configs
// round-trip exactly.
namespace toml {

using Value = std::variant<double, bool, std::string, std::vector<double>, std::vector<std::string>>;
using Table = std::map<std::string, std::map<std::string, Value>>;

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline Value parse_scalar(const std::string& tok, int lineno) {
    const std::string t = trim(tok);
    if (t.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty value");
    if (t == "true") return true;
    if (t == "false") return false;
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"')
            throw ConfigError("config line " + std::to_string(lineno) + ": unterminated string");
        return t.substr(1, t.size() - 2);
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(lineno) + ": cannot parse value '" + t + "'");
    }
}

inline Value parse_value(const std::string& raw, int lineno) {
    const std::string t = trim(raw);
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']')
            throw ConfigError("config line " + std::to_string(lineno) + ": unterminated array");
        const std::string body = t.substr(1, t.size() - 2);
        std::vector<std::string> toks;
        std::string cur;
        bool in_string = false;
        for (char c : body) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                toks.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!trim(cur).empty()) toks.push_back(cur);
        std::vector<double> nums;
        std::vector<std::string> strs;
        bool any_str = false;
        for (const auto& tk : toks) {
            Value v = parse_scalar(tk, lineno);
            if (std::holds_alternative<std::string>(v)) {
                any_str = true;
                strs.push_back(std::get<std::string>(v));
            } else if (std::holds_alternative<double>(v)) {
                nums.push_back(std::get<double>(v));
            } else {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad array element");
            }
        }
        if (any_str && !nums.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": mixed array types");
        if (any_str) return strs;
        return nums;
    }
    return parse_scalar(t, lineno);
}

inline Table parse(std::istream& in) {
    Table table;
    std::string section = "";
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
            table[section];
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(s.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        table[section][key] = parse_value(s.substr(eq + 1), lineno);
    }
    return table;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
}

inline std::string format_number(double v) {
    char buf[40];
    if (v == static_cast<long long>(v) && std::abs(v) < 1e15)
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    else
        std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string serialize_value(const Value& v) {
    std::ostringstream os;
    if (std::holds_alternative<double>(v)) {
        os << format_number(std::get<double>(v));
    } else if (std::holds_alternative<bool>(v)) {
        os << (std::get<bool>(v) ? "true" : "false");
    } else if (std::holds_alternative<std::string>(v)) {
        os << '"' << std::get<std::string>(v) << '"';
    } else if (std::holds_alternative<std::vector<double>>(v)) {
        os << '[';
        const auto& a = std::get<std::vector<double>>(v);
        for (std::size_t i = 0; i < a.size(); ++i) os << (i ? ", " : "") << format_number(a[i]);
        os << ']';
    } else {
        os << '[';
        const auto& a = std::get<std::vector<std::string>>(v);
        for (std::size_t i = 0; i < a.size(); ++i) os << (i ? ", " : "") << '"' << a[i] << '"';
        os << ']';
    }
    return os.str();
}

} // namespace toml

struct NonlinearitySpec {
    std::string name = "zero";
    std::vector<double> params;
};

/// Everything one run needs, with defaults matching the desk-scale setup.
/// Every threshold that gates an exit status lives here, never only in code.
struct RunConfig {
    // geometry
    int n = 3;
    int nodes_per_axis = 33;
    double side = 1.0;
    std::string face = "z+";
    double r0 = 0.44;
    double r1 = 0.48;

    // conductivity (row-major 3x3)
    std::vector<double> conductivity = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    // coefficients
    NonlinearitySpec unknown{"cubic", {1.0}};
    NonlinearitySpec reference{"zero", {}};

    // sweep
    double tau = 1.0;
    int t_points = 9;
    std::vector<double> deltas;  // empty: geometric default
    int delta_points = 4;

    // tolerances
    double tol_lin = 1e-10;
    double tol_newton = 1e-10;
    int newton_max_iter = 50;
    double power_tol = 1e-8;
    double lambda1_tol = 1e-6;
    double identity_solver_tol = 1e-12;

    // stability experiment
    std::vector<double> stability_epsilons = {0.4, 0.238, 0.141, 0.084, 0.05};
    std::string stability_bump = "gauss_bump";
    int basis_budget = 160;

    // randomness & execution
    std::uint64_t seed = 20260808;
    int workers = 1;
    std::string output_dir = "out";

    // thresholds (exit-status gates)
    double identity_rel = 1e-9;
    double flux_rel = 1e-12;
    double frechet_slope_lo = 0.9;
    double frechet_slope_hi = 1.1;
    double probe_trace_slope = -1.5;
    double probe_trace_slope_tol = 0.35;
    double probe_data_slope = 0.5;
    double probe_data_slope_tol = 0.35;
    double corrector_ratio_max = 2.0;
    double lambda1_rel = 0.02;
    double recover_const_rel = 0.05;
    double recover_bump_rel = 0.25;
    double recover_linear_rel = 0.10;
    double recover_even_rel = 0.15;
    double stability_exponent = 0.2;
    double stability_c_spread_max = 10.0;
    int identity_pairs = 5;
    int flux_extensions = 10;

    Eigen::Matrix3d conductivity_matrix() const {
        if (conductivity.size() != 9) throw ConfigError("conductivity: expected 9 entries");
        Eigen::Matrix3d A;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) A(r, c) = conductivity[3 * r + c];
        return A;
    }
};

namespace detail {

inline double get_num(const toml::Table& t, const std::string& sec, const std::string& key,
                      double dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    if (!std::holds_alternative<double>(ki->second))
        throw ConfigError(sec + "." + key + ": expected a number");
    return std::get<double>(ki->second);
}

inline int get_int(const toml::Table& t, const std::string& sec, const std::string& key, int dflt) {
    const double v = get_num(t, sec, key, dflt);
    if (v != static_cast<long long>(v)) throw ConfigError(sec + "." + key + ": expected an integer");
    return static_cast<int>(v);
}

inline std::string get_str(const toml::Table& t, const std::string& sec, const std::string& key,
                           const std::string& dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    if (!std::holds_alternative<std::string>(ki->second))
        throw ConfigError(sec + "." + key + ": expected a string");
    return std::get<std::string>(ki->second);
}

inline std::vector<double> get_arr(const toml::Table& t, const std::string& sec,
                                   const std::string& key, const std::vector<double>& dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    if (std::holds_alternative<std::vector<double>>(ki->second))
        return std::get<std::vector<double>>(ki->second);
    if (std::holds_alternative<double>(ki->second)) return {std::get<double>(ki->second)};
    throw ConfigError(sec + "." + key + ": expected a numeric array");
}

} // namespace detail

inline RunConfig config_from_table(const toml::Table& t) {
    using namespace detail;
    RunConfig c;
    c.n = get_int(t, "geometry", "n", c.n);
    c.nodes_per_axis = get_int(t, "geometry", "nodes_per_axis", c.nodes_per_axis);
    c.side = get_num(t, "geometry", "side", c.side);
    c.face = get_str(t, "geometry", "face", c.face);
    c.r0 = get_num(t, "geometry", "r0", c.r0);
    c.r1 = get_num(t, "geometry", "r1", c.r1);
    c.conductivity = get_arr(t, "conductivity", "matrix", c.conductivity);
    c.unknown.name = get_str(t, "nonlinearity", "unknown", c.unknown.name);
    c.unknown.params = get_arr(t, "nonlinearity", "unknown_params", c.unknown.params);
    c.reference.name = get_str(t, "nonlinearity", "reference", c.reference.name);
    c.reference.params = get_arr(t, "nonlinearity", "reference_params", c.reference.params);
    c.tau = get_num(t, "sweep", "tau", c.tau);
    c.t_points = get_int(t, "sweep", "t_points", c.t_points);
    c.deltas = get_arr(t, "sweep", "deltas", c.deltas);
    c.delta_points = get_int(t, "sweep", "delta_points", c.delta_points);
    c.tol_lin = get_num(t, "tolerances", "tol_lin", c.tol_lin);
    c.tol_newton = get_num(t, "tolerances", "tol_newton", c.tol_newton);
    c.newton_max_iter = get_int(t, "tolerances", "newton_max_iter", c.newton_max_iter);
    c.power_tol = get_num(t, "tolerances", "power_tol", c.power_tol);
    c.lambda1_tol = get_num(t, "tolerances", "lambda1_tol", c.lambda1_tol);
    c.identity_solver_tol = get_num(t, "tolerances", "identity_solver_tol", c.identity_solver_tol);
    c.stability_epsilons = get_arr(t, "stability", "epsilons", c.stability_epsilons);
    c.stability_bump = get_str(t, "stability", "bump", c.stability_bump);
    c.basis_budget = get_int(t, "stability", "basis_budget", c.basis_budget);
    c.seed = static_cast<std::uint64_t>(get_num(t, "random", "seed", static_cast<double>(c.seed)));
    c.workers = get_int(t, "run", "workers", c.workers);
    c.output_dir = get_str(t, "run", "output_dir", c.output_dir);

    c.identity_rel = get_num(t, "thresholds", "identity_rel", c.identity_rel);
    c.flux_rel = get_num(t, "thresholds", "flux_rel", c.flux_rel);
    c.frechet_slope_lo = get_num(t, "thresholds", "frechet_slope_lo", c.frechet_slope_lo);
    c.frechet_slope_hi = get_num(t, "thresholds", "frechet_slope_hi", c.frechet_slope_hi);
    c.probe_trace_slope = get_num(t, "thresholds", "probe_trace_slope", c.probe_trace_slope);
    c.probe_trace_slope_tol = get_num(t, "thresholds", "probe_trace_slope_tol", c.probe_trace_slope_tol);
    c.probe_data_slope = get_num(t, "thresholds", "probe_data_slope", c.probe_data_slope);
    c.probe_data_slope_tol = get_num(t, "thresholds", "probe_data_slope_tol", c.probe_data_slope_tol);
    c.corrector_ratio_max = get_num(t, "thresholds", "corrector_ratio_max", c.corrector_ratio_max);
    c.lambda1_rel = get_num(t, "thresholds", "lambda1_rel", c.lambda1_rel);
    c.recover_const_rel = get_num(t, "thresholds", "recover_const_rel", c.recover_const_rel);
    c.recover_bump_rel = get_num(t, "thresholds", "recover_bump_rel", c.recover_bump_rel);
    c.recover_linear_rel = get_num(t, "thresholds", "recover_linear_rel", c.recover_linear_rel);
    c.recover_even_rel = get_num(t, "thresholds", "recover_even_rel", c.recover_even_rel);
    c.stability_exponent = get_num(t, "thresholds", "stability_exponent", c.stability_exponent);
    c.stability_c_spread_max = get_num(t, "thresholds", "stability_c_spread_max", c.stability_c_spread_max);
    c.identity_pairs = get_int(t, "thresholds", "identity_pairs", c.identity_pairs);
    c.flux_extensions = get_int(t, "thresholds", "flux_extensions", c.flux_extensions);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    return config_from_table(toml::parse_file(path));
}

/// Field-level validation against the module preconditions; collects every
/// problem instead of stopping at the first.
inline std::vector<std::string> validate_config(const RunConfig& c) {
    std::vector<std::string> errs;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) errs.push_back(msg);
    };
    check(c.n == 3, "geometry.n: only 3 is supported (and n >= 3 is required)");
    check(c.nodes_per_axis >= 8, "geometry.nodes_per_axis: need at least 8");
    check(c.side > 0.0, "geometry.side: must be positive");
    try {
        face_from_name(c.face);
    } catch (const ConfigError& e) {
        errs.push_back(std::string("geometry.face: ") + e.what());
    }
    const double h = c.side / std::max(1, c.nodes_per_axis - 1);
    check(c.r0 > h, "geometry.r0: must exceed the grid spacing");
    check(c.r1 > c.r0, "geometry.r1: must exceed r0");
    check(c.r1 < c.side / 2.0, "geometry.r1: must stay inside the face");
    check(c.r1 - c.r0 >= h, "geometry: r1 - r0 must be at least one grid spacing");
    check(c.conductivity.size() == 9, "conductivity.matrix: expected 9 entries");
    if (c.conductivity.size() == 9) {
        try {
            make_conductivity(RunConfig{c}.conductivity_matrix());
        } catch (const ConfigError& e) {
            errs.push_back(std::string("conductivity.matrix: ") + e.what());
        }
    }
    check(c.tau > 0.0, "sweep.tau: must be positive");
    check(c.t_points >= 3 && c.t_points % 2 == 1, "sweep.t_points: need an odd count >= 3");
    check(c.delta_points >= 2, "sweep.delta_points: need at least 2");
    for (double d : c.deltas)
        check(d >= 4.0 * h && d <= c.r0 / 2.0, "sweep.deltas: entries must lie in [4h, r0/2]");
    check(c.tol_lin > 0 && c.tol_newton > 0 && c.power_tol > 0 && c.lambda1_tol > 0,
          "tolerances: must be positive");
    check(c.newton_max_iter >= 1, "tolerances.newton_max_iter: need at least 1");
    check(!c.stability_epsilons.empty(), "stability.epsilons: need at least one magnitude");
    for (double e : c.stability_epsilons) check(e > 0.0, "stability.epsilons: must be positive");
    check(c.workers >= 1, "run.workers: need at least 1");
    check(c.identity_pairs >= 1, "thresholds.identity_pairs: need at least 1");
    check(c.flux_extensions >= 1, "thresholds.flux_extensions: need at least 1");
    try {
        builtin(c.unknown.name, c.unknown.params);
    } catch (const ConfigError& e) {
        errs.push_back(std::string("nonlinearity.unknown: ") + e.what());
    }
    try {
        builtin(c.reference.name, c.reference.params);
    } catch (const ConfigError& e) {
        errs.push_back(std::string("nonlinearity.reference: ") + e.what());
    }
    return errs;
}

/// Canonical serialization; parse(serialize(c)) reproduces c exactly.
inline std::string serialize_config(const RunConfig& c) {
    using toml::serialize_value;
    using V = toml::Value;
    std::ostringstream os;
    auto kv = [&os](const std::string& k, const V& v) {
        os << k << " = " << serialize_value(v) << "\n";
    };
    os << "[geometry]\n";
    kv("n", static_cast<double>(c.n));
    kv("nodes_per_axis", static_cast<double>(c.nodes_per_axis));
    kv("side", c.side);
    kv("face", c.face);
    kv("r0", c.r0);
    kv("r1", c.r1);
    os << "\n[conductivity]\n";
    kv("matrix", c.conductivity);
    os << "\n[nonlinearity]\n";
    kv("unknown", c.unknown.name);
    kv("unknown_params", c.unknown.params);
    kv("reference", c.reference.name);
    kv("reference_params", c.reference.params);
    os << "\n[sweep]\n";
    kv("tau", c.tau);
    kv("t_points", static_cast<double>(c.t_points));
    kv("deltas", c.deltas);
    kv("delta_points", static_cast<double>(c.delta_points));
    os << "\n[tolerances]\n";
    kv("tol_lin", c.tol_lin);
    kv("tol_newton", c.tol_newton);
    kv("newton_max_iter", static_cast<double>(c.newton_max_iter));
    kv("power_tol", c.power_tol);
    kv("lambda1_tol", c.lambda1_tol);
    kv("identity_solver_tol", c.identity_solver_tol);
    os << "\n[stability]\n";
    kv("epsilons", c.stability_epsilons);
    kv("bump", c.stability_bump);
    kv("basis_budget", static_cast<double>(c.basis_budget));
    os << "\n[random]\n";
    kv("seed", static_cast<double>(c.seed));
    os << "\n[run]\n";
    kv("workers", static_cast<double>(c.workers));
    kv("output_dir", c.output_dir);
    os << "\n[thresholds]\n";
    kv("identity_rel", c.identity_rel);
    kv("flux_rel", c.flux_rel);
    kv("frechet_slope_lo", c.frechet_slope_lo);
    kv("frechet_slope_hi", c.frechet_slope_hi);
    kv("probe_trace_slope", c.probe_trace_slope);
    kv("probe_trace_slope_tol", c.probe_trace_slope_tol);
    kv("probe_data_slope", c.probe_data_slope);
    kv("probe_data_slope_tol", c.probe_data_slope_tol);
    kv("corrector_ratio_max", c.corrector_ratio_max);
    kv("lambda1_rel", c.lambda1_rel);
    kv("recover_const_rel", c.recover_const_rel);
    kv("recover_bump_rel", c.recover_bump_rel);
    kv("recover_linear_rel", c.recover_linear_rel);
    kv("recover_even_rel", c.recover_even_rel);
    kv("stability_exponent", c.stability_exponent);
    kv("stability_c_spread_max", c.stability_c_spread_max);
    kv("identity_pairs", static_cast<double>(c.identity_pairs));
    kv("flux_extensions", static_cast<double>(c.flux_extensions));
    return os.str();
}

} // namespace dtnprobe
