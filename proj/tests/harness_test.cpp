#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "test_support.hpp"

using namespace wpglab;
namespace fs = std::filesystem;

namespace {

const std::string kMinimal = R"({
  "benchmark": {"family": "single_state_quadratic", "params": {"r0": 0.0, "gamma": 0.5, "tau": 1.0, "beta": 1.0}}
})";

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("wpglab_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "wpglab");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string config_path(const char* name) { return std::string(WPGLAB_SOURCE_DIR) + "/configs/" + name; }

} // namespace

TEST(Config, MinimalConfigFillsDefaults) {
    ExperimentConfig cfg = parse_config(kMinimal);
    EXPECT_EQ(cfg.wpgd.solver_tol, 1e-10);
    EXPECT_EQ(cfg.eps_tail, 1e-12);
    EXPECT_EQ(cfg.wpgd.diagnostics_every, 1u);
    EXPECT_EQ(cfg.wpgd.eta, cfg.report.eta0);
    EXPECT_EQ(cfg.verify, check_names());
    EXPECT_LT(tail_certificate(*cfg.grid, 1.0, 1.0), 1e-12);
    EXPECT_EQ(cfg.init.var[0][0], 1.0);
}

TEST(Config, DimensionMismatchNamesTheField) {
    try {
        parse_config(R"({"benchmark": {"family": "single_state_quadratic",
                          "params": {"r0": 0.0, "gamma": 0.5, "tau": 1.0, "beta": 1.0}}, "grid": {"d": 2}})");
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("grid.d:", 0), 0u) << e.what();
    }
}

TEST(Config, InfeasibleStepNamesTheBindingConstraint) {
    try {
        parse_config(R"({"benchmark": {"family": "single_state_quadratic",
                          "params": {"r0": 0.0, "gamma": 0.5, "tau": 1.0, "beta": 1.0}}, "wpgd": {"eta": 0.1}})");
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("wpgd.eta"), std::string::npos) << msg;
        EXPECT_NE(msg.find("ᾱ(1−γ)²/(2C_δ)"), std::string::npos) << msg;
    }
    ExperimentConfig forced = parse_config(R"({"benchmark": {"family": "single_state_quadratic",
        "params": {"r0": 0.0, "gamma": 0.5, "tau": 1.0, "beta": 1.0}}, "wpgd": {"eta": 0.1, "force_eta": true}})");
    EXPECT_EQ(forced.wpgd.eta, 0.1);
    EXPECT_EQ(forced.report.eta, 0.1);
}

TEST(Config, UnknownKeysAndSyntaxErrorsAreLocated) {
    try {
        parse_config(R"({"benchmark": {"family": "single_state_quadratic",
            "params": {"r0": 0.0, "gamma": 0.5, "tau": 1.0, "beta": 1.0}}, "wpgd": {"stpes": 3}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("wpgd.stpes: unknown key"), std::string::npos) << e.what();
    }
    try {
        parse_config("{\n  \"benchmark\": {,\n}");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config(R"({"benchmark": {"family": "torus", "params": {}}})"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, PerStateInitialization) {
    ExperimentConfig cfg = load_config(config_path("logit_chain.json"));
    EXPECT_EQ(cfg.spec.num_states(), 2u);
    EXPECT_EQ(cfg.wpgd.backend, Backend::grid_oracle);
    auto text = cfg.raw;
    text["init"] = {{"mean", {{0.5}, {-0.5}}}, {"var", 0.25}};
    ExperimentConfig per_state = parse_config(text.dump());
    EXPECT_EQ(per_state.init.mean[1][0], -0.5);
    EXPECT_EQ(per_state.init.var[0][0], 0.25);
    text["init"] = {{"mean", {0.5, 0.1, 0.2}}};
    EXPECT_THROW(parse_config(text.dump()), ConfigError);
}

TEST(Outputs, EmptyDiagnosticsGiveHeaderOnly) {
    EXPECT_EQ(trajectory_csv({}), std::string(kTrajectoryHeader) + "\n");
    fs::path dir = scratch_dir("empty");
    RunSummary summary;
    auto files = write_outputs({}, summary, dir, true);
    ASSERT_EQ(files.size(), 3u);
    EXPECT_EQ(slurp(dir / "trajectory.csv"), std::string(kTrajectoryHeader) + "\n");
    nlohmann::json j = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_TRUE(j["final_e_k"].is_null());
    EXPECT_NE(slurp(dir / "plot.gp").find("e_k"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Outputs, EnvelopeColumnIsNonincreasing) {
    Experiment ex(load_config(config_path("single_state_quadratic.json")));
    WpgdConfig w = ex.config().wpgd;
    w.steps = 40;
    TrajectoryResult res = ex.run(w);
    const double bias = envelope_bias(ex.report(), w.eta);
    double prev = kInf;
    for (const auto& d : res.diagnostics) {
        EXPECT_LE(d.envelope - bias, prev);
        prev = d.envelope - bias;
    }
    RunSummary s = ex.summarize(res.diagnostics, w, 0.0);
    EXPECT_TRUE(s.envelope_satisfied);
    EXPECT_EQ(s.steps, 40u);
    std::string csv = trajectory_csv(res.diagnostics, 10);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6); // header, k = 0, 10, 20, 30, 40
}

TEST(Outputs, PlateauAndRateOfASyntheticGeometricSeries) {
    std::vector<StepDiagnostics> diags(200);
    for (std::size_t k = 0; k < diags.size(); ++k) {
        diags[k].k = k;
        diags[k].e_k = 0.01 + std::exp(-0.2 * double(k));
    }
    double plateau = estimate_plateau(diags);
    EXPECT_NEAR(plateau, 0.01, 1e-12);
    EXPECT_NEAR(fit_geometric_rate(diags, plateau), 0.2, 1e-6);
    EXPECT_EQ(format_number(kNaN), "nan");
    EXPECT_EQ(format_number(0.1), "0.1");
}

TEST(Outputs, SweepPlateauHalvesPerRow) {
    Experiment ex(load_config(config_path("bias_sweep.json")));
    auto rows = run_sweep(ex, ex.config().sweep_etas, true);
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        double ratio = rows[i].plateau / rows[i - 1].plateau;
        EXPECT_GE(ratio, 0.35) << "eta " << rows[i].eta;
        EXPECT_LE(ratio, 0.75) << "eta " << rows[i].eta;
    }
}

TEST(Cli, VerifyPassesOnTheQuadraticFamily) {
    CliRun r = cli({"verify", "--config", config_path("single_state_quadratic.json")});
    EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), static_cast<long>(check_names().size()));
}

TEST(Cli, ConstantsReportsValueScale) {
    fs::path dir = scratch_dir("constants");
    fs::path cfg = write_config(dir, R"({
      "benchmark": {"family": "single_state_quadratic",
                    "params": {"r0": 1.0, "gamma": 0.5, "tau": 1.0, "beta": 6.283185307179586}},
      "init": {"mean": 0.0}
    })");
    CliRun r = cli({"constants", "--config", cfg.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    nlohmann::json j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["v_bar"].get<double>(), 7.0, 1e-12);
    EXPECT_NEAR(j["u_bound"].get<double>(), 2.0, 1e-12);
    EXPECT_TRUE(j["stepsize"]["below_eta0"].get<bool>());
    fs::remove_all(dir);
}

TEST(Cli, ExitCodesForBadInput) {
    fs::path dir = scratch_dir("badcfg");
    fs::path cfg = write_config(dir, R"({"benchmark": {"family": "single_state_quadratic"}})");
    EXPECT_EQ(cli({"constants", "--config", cfg.string()}).code, kExitConfig);
    EXPECT_EQ(cli({"constants", "--config", (dir / "missing.json").string()}).code, kExitConfig);
    EXPECT_EQ(cli({"verify", "--config", config_path("single_state_quadratic.json"), "--checks", "nope"}).code,
              kExitConfig);
    EXPECT_EQ(cli({"sweep", "--config", config_path("single_state_quadratic.json")}).code, kExitConfig);
    EXPECT_EQ(cli({}).code, kExitConfig);
    fs::remove_all(dir);
}

TEST(Cli, RunIsByteReproducible) {
    fs::path a = scratch_dir("run_a"), b = scratch_dir("run_b");
    for (const fs::path& dir : {a, b}) {
        CliRun r = cli({"run", "--config", config_path("logit_chain.json"), "--out", dir.string(), "--backend",
                        "particles"});
        ASSERT_EQ(r.code, kExitOk) << r.err;
    }
    std::string csv = slurp(a / "trajectory.csv");
    EXPECT_FALSE(csv.empty());
    EXPECT_EQ(csv, slurp(b / "trajectory.csv"));
    nlohmann::json s = nlohmann::json::parse(slurp(a / "summary.json"));
    EXPECT_EQ(s["seeds"]["wpgd"].get<std::uint64_t>(), 11u);
    EXPECT_EQ(s["backend"], "particles");
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, SeedOverrideChangesTheParticleRun) {
    fs::path a = scratch_dir("seed_a"), b = scratch_dir("seed_b");
    const std::string cfg = config_path("logit_chain.json");
    ASSERT_EQ(cli({"run", "--config", cfg, "--out", a.string(), "--backend", "particles"}).code, kExitOk);
    ASSERT_EQ(cli({"run", "--config", cfg, "--out", b.string(), "--backend", "particles", "--seed", "12"}).code,
              kExitOk);
    EXPECT_NE(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}
