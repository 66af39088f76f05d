#ifndef WPGLAB_HARNESS_CLI_HPP
#define WPGLAB_HARNESS_CLI_HPP

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wpglab/harness/config.hpp"
#include "wpglab/harness/experiment.hpp"
#include "wpglab/harness/outputs.hpp"
#include "wpglab/harness/verify.hpp"

namespace wpglab {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct CliOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool force_eta = false;
    std::string checks;
    std::string backend;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline ExperimentConfig load_with_overrides(const CliOptions& o) {
    ExperimentConfig cfg = load_config(o.config, false);
    if (o.seed) cfg.wpgd.seed = *o.seed;
    if (o.force_eta) cfg.wpgd.force_eta = true;
    if (!o.backend.empty()) {
        try {
            cfg.wpgd.backend = parse_backend(o.backend);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("--backend: ") + e.what());
        }
    }
    if (!o.checks.empty() && o.checks != "all") {
        cfg.verify = split_list(o.checks);
        for (const auto& n : cfg.verify)
            if (std::find(check_names().begin(), check_names().end(), n) == check_names().end())
                throw ConfigError("--checks: unknown check '" + n + "'");
    } else if (o.checks == "all") {
        cfg.verify = check_names();
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    resolve(cfg);
    unsigned fallback = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    set_worker_count(threads_from_env(fallback));
    return cfg;
}

inline int cmd_constants(const CliOptions& o, std::ostream& out) {
    ExperimentConfig cfg = load_with_overrides(o);
    nlohmann::json j = to_json(cfg.report);
    StepsizeCertificate c = check_stepsize(cfg.report, cfg.wpgd.eta);
    j["stepsize"] = {{"eta", c.eta},           {"penalty_ok", c.penalty_ok}, {"lsi_ok", c.lsi_ok},
                     {"bias_ok", c.bias_ok},   {"below_eta0", c.below_eta0}, {"bias_ratio", c.bias_ratio},
                     {"binding", c.binding}};
    out << j.dump(2) << "\n";
    return kExitOk;
}

inline int cmd_solve(const CliOptions& o, std::ostream& out) {
    Experiment ex(load_with_overrides(o));
    ValueFn v0 = policy_value(ex.initial_grid_policy(), ex.model());
    nlohmann::json j;
    j["v_star"] = ex.vstar().values;
    j["v_pi0"] = v0.values;
    j["e_0"] = sup_distance(ex.vstar().values, v0.values);
    j["sup_norms"] = "exact over the finite state set";
    out << j.dump(2) << "\n";
    return kExitOk;
}

inline int cmd_run(const CliOptions& o, std::ostream& out) {
    auto t0 = std::chrono::steady_clock::now();
    Experiment ex(load_with_overrides(o));
    const auto& cfg = ex.config();
    TrajectoryResult res = ex.run();
    RunSummary summary = ex.summarize(res.diagnostics, cfg.wpgd, seconds_since(t0));
    auto files = write_outputs(res.diagnostics, summary, cfg.out_dir, cfg.emit_plot_script, cfg.wpgd.diagnostics_every);
    out << "final e_k " << format_number(summary.final_e_k) << ", plateau " << format_number(summary.plateau)
        << ", envelope " << (summary.envelope_satisfied ? "satisfied" : "violated") << "\n";
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
    return kExitOk;
}

inline int cmd_verify(const CliOptions& o, std::ostream& out) {
    auto t0 = std::chrono::steady_clock::now();
    Experiment ex(load_with_overrides(o));
    const auto& cfg = ex.config();
    Verifier verifier(ex, cfg.wpgd.backend);
    std::vector<CheckResult> results = verifier.run_all(cfg.verify);
    RunSummary summary = ex.summarize(verifier.diagnostics(), cfg.wpgd, seconds_since(t0));
    for (const auto& r : results) {
        out << r.name << ": " << r.verdict.label();
        if (r.verdict.kind == VerdictKind::fail) out << " (" << r.verdict.reason << ")";
        out << "\n";
        summary.verdicts[r.name] = r.verdict;
    }
    if (!o.out.empty()) write_outputs(verifier.diagnostics(), summary, cfg.out_dir, cfg.emit_plot_script);
    return all_passed(results) ? kExitOk : kExitCheckFailed;
}

inline int cmd_sweep(const CliOptions& o, std::ostream& out) {
    Experiment ex(load_with_overrides(o));
    const auto& cfg = ex.config();
    if (cfg.sweep_etas.empty()) throw ConfigError("sweep.etas: required for the sweep command");
    for (double eta : cfg.sweep_etas) {
        if (!cfg.wpgd.force_eta && eta > cfg.report.eta0)
            throw ConfigError("sweep.etas: " + format_number(eta) + " exceeds eta0 = " + format_number(cfg.report.eta0) +
                              " (binding constraint " + cfg.report.eta0_binding() + "); set force_eta");
    }
    auto rows = run_sweep(ex, cfg.sweep_etas, cfg.wpgd.force_eta);
    std::string csv = sweep_csv(rows);
    std::filesystem::create_directories(cfg.out_dir);
    write_text(std::filesystem::path(cfg.out_dir) / "sweep.csv", csv);
    out << csv;
    return kExitOk;
}

} // namespace detail

/// Entry point of the command-line tool; returns the process exit code.
inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Entropy-regularized MDP solver and WPGD laboratory"};
    app.require_subcommand(1);
    CliOptions o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory (overrides outputs.dir)");
        sub->add_option("--seed", o.seed, "64-bit seed (overrides wpgd.seed)");
        sub->add_flag("--force-eta", o.force_eta, "allow eta above the feasible ceiling eta0");
        sub->add_option("--checks", o.checks, "comma-separated check names or 'all'");
        sub->add_option("--backend", o.backend, "particles or grid_oracle");
    };
    std::vector<std::pair<CLI::App*, int (*)(const CliOptions&, std::ostream&)>> cmds{
        {app.add_subcommand("constants", "print the constants report"), &detail::cmd_constants},
        {app.add_subcommand("solve", "print V* and the value of the initial policy"), &detail::cmd_solve},
        {app.add_subcommand("run", "run WPGD and write trajectory.csv and summary.json"), &detail::cmd_run},
        {app.add_subcommand("verify", "run the identity checks; nonzero exit on failure"), &detail::cmd_verify},
        {app.add_subcommand("sweep", "run over sweep.etas and write sweep.csv"), &detail::cmd_sweep}};
    for (auto& [sub, fn] : cmds) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitConfig;
    }
    try {
        for (auto& [sub, fn] : cmds)
            if (sub->parsed()) return fn(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}

} // namespace wpglab

#endif
