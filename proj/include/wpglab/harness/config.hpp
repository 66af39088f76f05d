#ifndef WPGLAB_HARNESS_CONFIG_HPP
#define WPGLAB_HARNESS_CONFIG_HPP

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wpglab/constants.hpp"
#include "wpglab/core.hpp"
#include "wpglab/model.hpp"
#include "wpglab/quadrature.hpp"
#include "wpglab/wpgd.hpp"

namespace wpglab {

/// Names accepted by `verify`, in report order.
inline const std::vector<std::string>& check_names() {
    static const std::vector<std::string> names{
        "residual_identity", "tstar_contraction", "perf_diff",        "resolvent",
        "residual_vs_gap",   "q_gradient_fd",     "moment_bound",     "kl_one_step",
        "kl_to_bellman",     "value_bounds",      "gaussian_kl_smoothing", "bounded_tilt_kl",
        "envelope",          "gaussian_second_moment"};
    return names;
}

/// A parsed, validated experiment description plus the model objects it resolves to.
struct ExperimentConfig {
    std::string source; // file path or "<inline>"
    nlohmann::json raw;

    std::string family;
    nlohmann::json params;

    std::optional<double> grid_radius; // empty: chosen from eps_tail
    int grid_n = 2049;
    int grid_d = 1;
    double eps_tail = 1e-12;

    nlohmann::json init_mean = 0.0;
    nlohmann::json init_var = nullptr; // null: tau/beta, the reference variance

    WpgdConfig wpgd;
    bool eta_given = false;

    std::string out_dir = "out";
    bool emit_plot_script = false;

    std::vector<std::string> verify = check_names();
    Vec sweep_etas;
    unsigned threads = 0; // 0: WPG_LAB_THREADS or hardware concurrency

    // Resolved
    MdpSpec spec;
    GridPtr grid;
    GaussianInit init;
    RegularityProfile profile;
    ConstantsReport report;
};

namespace detail {

inline std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(path + "." + it.key() + ": unknown key");
    }
}

inline double get_number(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v.get<double>();
}

inline long long get_integer(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
    return v.get<long long>();
}

inline bool get_bool(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError(path + "." + key + ": expected true or false");
    return v.get<bool>();
}

inline std::string get_string(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

/// Expands a scalar, a d-vector, or an m x d matrix into per-state vectors.
inline std::vector<Vec> expand_init(const nlohmann::json& v, std::size_t m, int d, const std::string& path) {
    auto row = [&](const nlohmann::json& r, const std::string& p) {
        if (r.is_number()) return Vec(d, r.get<double>());
        if (!r.is_array() || r.size() != static_cast<std::size_t>(d))
            throw ConfigError(p + ": expected a number or " + std::to_string(d) + " numbers");
        Vec out;
        for (const auto& x : r) {
            if (!x.is_number()) throw ConfigError(p + ": entries must be numbers");
            out.push_back(x.get<double>());
        }
        return out;
    };
    if (v.is_array() && !v.empty() && v.front().is_array()) {
        if (v.size() != m) throw ConfigError(path + ": expected one row per state (" + std::to_string(m) + ")");
        std::vector<Vec> out;
        for (std::size_t s = 0; s < m; ++s) out.push_back(row(v[s], path + "[" + std::to_string(s) + "]"));
        return out;
    }
    return std::vector<Vec>(m, row(v, path));
}

} // namespace detail

/// Resolves spec, grid, initial law and constants; checks cross-section consistency.
inline void resolve(ExperimentConfig& cfg) {
    try {
        cfg.spec = make_benchmark(cfg.family, cfg.params);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("benchmark.params: ") + e.what());
    }
    if (cfg.grid_d != cfg.spec.action_dim)
        throw ConfigError("grid.d: " + std::to_string(cfg.grid_d) + " does not match the benchmark action dimension " +
                          std::to_string(cfg.spec.action_dim));
    const std::size_t m = cfg.spec.num_states();
    const int d = cfg.spec.action_dim;
    double radius = 0.0;
    try {
        radius = cfg.grid_radius ? *cfg.grid_radius : auto_radius(d, cfg.spec.beta, cfg.spec.tau, cfg.eps_tail);
        cfg.grid = build_grid(d, radius, cfg.grid_n);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    cfg.init.mean = detail::expand_init(cfg.init_mean, m, d, "init.mean");
    cfg.init.var = cfg.init_var.is_null() ? std::vector<Vec>(m, Vec(d, cfg.spec.tau / cfg.spec.beta))
                                          : detail::expand_init(cfg.init_var, m, d, "init.var");
    for (std::size_t s = 0; s < m; ++s)
        for (double v : cfg.init.var[s])
            if (!(v > 0.0)) throw ConfigError("init.var: variances must be > 0");

    cfg.profile = estimate_regularity(cfg.spec, *cfg.grid, cfg.init);
    cfg.report = compute_report(cfg.profile, cfg.spec.gamma, cfg.spec.tau, cfg.spec.beta, d);
    if (!cfg.eta_given) cfg.wpgd.eta = cfg.report.eta0;
    cfg.report = at_eta(cfg.report, cfg.wpgd.eta);
    if (!cfg.wpgd.force_eta && cfg.wpgd.eta > cfg.report.eta0) {
        std::ostringstream msg;
        msg.precision(6);
        msg << "wpgd.eta: " << cfg.wpgd.eta << " exceeds the feasible step ceiling eta0 = " << cfg.report.eta0
            << " (binding constraint " << cfg.report.eta0_binding() << "); set wpgd.force_eta or pass --force-eta";
        throw ConfigError(msg.str());
    }
}

/// Parses and validates a JSON config. Unknown keys anywhere are errors.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<inline>",
                                     bool resolve_model = true) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(source + ": parse error at " + detail::line_column(text, e.byte) + ": " + e.what());
    }
    ExperimentConfig cfg;
    cfg.source = source;
    cfg.raw = j;
    detail::reject_unknown_keys(j, "config", {"benchmark", "grid", "init", "wpgd", "outputs", "verify", "sweep", "threads"});

    if (!j.contains("benchmark")) throw ConfigError("config.benchmark: required");
    const auto& b = j["benchmark"];
    detail::reject_unknown_keys(b, "benchmark", {"family", "params"});
    if (!b.contains("family")) throw ConfigError("benchmark.family: required");
    cfg.family = detail::get_string(b, "family", "benchmark");
    try {
        parse_family(cfg.family);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("benchmark.family: ") + e.what());
    }
    cfg.params = b.value("params", nlohmann::json::object());
    if (!cfg.params.is_object()) throw ConfigError("benchmark.params: expected an object");

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        detail::reject_unknown_keys(g, "grid", {"radius", "n", "d", "eps_tail"});
        if (g.contains("radius")) {
            if (g["radius"].is_string()) {
                if (g["radius"] != "auto") throw ConfigError("grid.radius: expected a number or \"auto\"");
            } else {
                cfg.grid_radius = detail::get_number(g, "radius", "grid");
            }
        }
        if (g.contains("n")) cfg.grid_n = static_cast<int>(detail::get_integer(g, "n", "grid"));
        if (g.contains("d")) cfg.grid_d = static_cast<int>(detail::get_integer(g, "d", "grid"));
        if (g.contains("eps_tail")) cfg.eps_tail = detail::get_number(g, "eps_tail", "grid");
        if (!(cfg.eps_tail > 0.0)) throw ConfigError("grid.eps_tail: must be > 0");
    }
    if (!j.contains("grid") || !j["grid"].contains("d")) {
        // d follows the benchmark when the grid section leaves it out
        cfg.grid_d = cfg.params.contains("d") && cfg.params["d"].is_number_integer() ? cfg.params["d"].get<int>() : 1;
    }

    if (j.contains("init")) {
        const auto& in = j["init"];
        detail::reject_unknown_keys(in, "init", {"mean", "var"});
        if (in.contains("mean")) cfg.init_mean = in["mean"];
        if (in.contains("var")) cfg.init_var = in["var"];
    }

    if (j.contains("wpgd")) {
        const auto& w = j["wpgd"];
        const std::string p = "wpgd";
        detail::reject_unknown_keys(w, p,
                                    {"eta", "steps", "n_particles", "seed", "backend", "force_eta", "solver_tol",
                                     "diagnostics_every", "n_mc"});
        if (w.contains("eta")) {
            cfg.wpgd.eta = detail::get_number(w, "eta", p);
            cfg.eta_given = true;
            if (!(cfg.wpgd.eta > 0.0)) throw ConfigError("wpgd.eta: must be > 0");
        }
        if (w.contains("steps")) {
            auto k = detail::get_integer(w, "steps", p);
            if (k < 1) throw ConfigError("wpgd.steps: must be >= 1");
            cfg.wpgd.steps = static_cast<std::size_t>(k);
        }
        if (w.contains("n_particles")) {
            auto n = detail::get_integer(w, "n_particles", p);
            if (n < 2) throw ConfigError("wpgd.n_particles: must be >= 2");
            cfg.wpgd.n_particles = static_cast<std::size_t>(n);
        }
        if (w.contains("seed")) {
            if (!w["seed"].is_number_unsigned() && !w["seed"].is_number_integer())
                throw ConfigError("wpgd.seed: expected a non-negative integer");
            cfg.wpgd.seed = w["seed"].get<std::uint64_t>();
        }
        if (w.contains("backend")) {
            try {
                cfg.wpgd.backend = parse_backend(detail::get_string(w, "backend", p));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("wpgd.backend: ") + e.what());
            }
        }
        if (w.contains("force_eta")) cfg.wpgd.force_eta = detail::get_bool(w, "force_eta", p);
        if (w.contains("solver_tol")) {
            cfg.wpgd.solver_tol = detail::get_number(w, "solver_tol", p);
            if (!(cfg.wpgd.solver_tol > 0.0)) throw ConfigError("wpgd.solver_tol: must be > 0");
        }
        if (w.contains("diagnostics_every")) {
            auto e = detail::get_integer(w, "diagnostics_every", p);
            if (e < 1) throw ConfigError("wpgd.diagnostics_every: must be >= 1");
            cfg.wpgd.diagnostics_every = static_cast<std::size_t>(e);
        }
        if (w.contains("n_mc")) {
            auto n = detail::get_integer(w, "n_mc", p);
            if (n < 0) throw ConfigError("wpgd.n_mc: must be >= 0");
            cfg.wpgd.n_mc = static_cast<std::size_t>(n);
        }
    }

    if (j.contains("outputs")) {
        const auto& o = j["outputs"];
        detail::reject_unknown_keys(o, "outputs", {"dir", "emit_plot_script"});
        if (o.contains("dir")) cfg.out_dir = detail::get_string(o, "dir", "outputs");
        if (o.contains("emit_plot_script")) cfg.emit_plot_script = detail::get_bool(o, "emit_plot_script", "outputs");
    }

    if (j.contains("verify")) {
        const auto& v = j["verify"];
        if (v.is_string()) {
            if (v != "all") throw ConfigError("verify: expected \"all\" or a list of check names");
        } else if (v.is_array()) {
            cfg.verify.clear();
            for (const auto& x : v) {
                if (!x.is_string()) throw ConfigError("verify: check names must be strings");
                auto name = x.get<std::string>();
                if (std::find(check_names().begin(), check_names().end(), name) == check_names().end())
                    throw ConfigError("verify: unknown check '" + name + "'");
                cfg.verify.push_back(name);
            }
        } else {
            throw ConfigError("verify: expected \"all\" or a list of check names");
        }
    }

    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        detail::reject_unknown_keys(s, "sweep", {"etas"});
        if (s.contains("etas")) {
            if (!s["etas"].is_array() || s["etas"].empty()) throw ConfigError("sweep.etas: expected a non-empty list");
            for (const auto& x : s["etas"]) {
                if (!x.is_number() || !(x.get<double>() > 0.0)) throw ConfigError("sweep.etas: entries must be > 0");
                cfg.sweep_etas.push_back(x.get<double>());
            }
        }
    }

    if (j.contains("threads")) {
        auto t = detail::get_integer(j, "threads", "config");
        if (t < 0) throw ConfigError("config.threads: must be >= 0");
        cfg.threads = static_cast<unsigned>(t);
    }

    if (resolve_model) resolve(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path, bool resolve_model = true) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path, resolve_model);
}

} // namespace wpglab

#endif
