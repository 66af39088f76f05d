#ifndef WPGLAB_HARNESS_OUTPUTS_HPP
#define WPGLAB_HARNESS_OUTPUTS_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wpglab/constants.hpp"
#include "wpglab/core.hpp"
#include "wpglab/wpgd.hpp"

namespace wpglab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kTrajectoryHeader = "k,e_k,r_k_max,kl_gibbs_max,kl_ref_max,m_k,drift_sq,v_improve_min,envelope";

enum class VerdictKind { pass, fail, skipped };

struct Verdict {
    VerdictKind kind = VerdictKind::skipped;
    std::string reason; // skip reason or failure detail

    std::string label() const {
        switch (kind) {
        case VerdictKind::pass: return "pass";
        case VerdictKind::fail: return "fail";
        default: return "skipped: " + reason;
        }
    }
};

struct RunSummary {
    ConstantsReport constants;
    double final_e_k = kNaN;
    double fitted_rate = kNaN; // per-step geometric decay rate of e_k - plateau
    double plateau = kNaN;
    bool envelope_satisfied = false;
    std::map<std::string, Verdict> verdicts;
    std::uint64_t seed = 0;
    std::string backend;
    double eta = kNaN;
    std::size_t steps = 0;
    std::size_t n_particles = 0;
    double wall_time_s = 0.0;
    double tail_certificate = kNaN;
};

/// Mean of e_k over the last 10% of the run (at least one step).
inline double estimate_plateau(const std::vector<StepDiagnostics>& diags) {
    if (diags.empty()) return kNaN;
    std::size_t tail = std::max<std::size_t>(1, diags.size() / 10);
    double acc = 0.0;
    for (std::size_t i = diags.size() - tail; i < diags.size(); ++i) acc += diags[i].e_k;
    return acc / static_cast<double>(tail);
}

/// Least-squares slope of log(e_k - plateau) over the pre-plateau window,
/// returned as a positive per-step rate. The window keeps steps whose excess
/// over the plateau is above 1e-3 of the initial excess.
inline double fit_geometric_rate(const std::vector<StepDiagnostics>& diags, double plateau) {
    if (diags.size() < 3 || !std::isfinite(plateau)) return kNaN;
    double excess0 = diags.front().e_k - plateau;
    if (!(excess0 > 0.0)) return kNaN;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (const auto& d : diags) {
        double ex = d.e_k - plateau;
        if (!(ex > 1e-3 * excess0)) break;
        double x = static_cast<double>(d.k), y = std::log(ex);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1;
    }
    if (n < 2) return kNaN;
    double den = n * sxx - sx * sx;
    if (den == 0.0) return kNaN;
    return -(n * sxy - sx * sy) / den;
}

inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

/// Rows for k = 0, every, 2*every, ... and always the last step.
inline std::string trajectory_csv(const std::vector<StepDiagnostics>& diags, std::size_t every = 1) {
    std::string out = std::string(kTrajectoryHeader) + "\n";
    for (std::size_t i = 0; i < diags.size(); ++i) {
        const auto& d = diags[i];
        if (d.k % every != 0 && i + 1 != diags.size()) continue;
        out += std::to_string(d.k);
        for (double x : {d.e_k, d.r_k_max, d.kl_gibbs_max(), d.kl_ref_max(), d.m_k, d.drift_sq, d.v_improve_min,
                         d.envelope}) {
            out += ',';
            out += format_number(x);
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

} // namespace detail

inline nlohmann::json to_json(const RunSummary& s) {
    nlohmann::json j;
    j["constants"] = to_json(s.constants);
    j["final_e_k"] = detail::number_or_null(s.final_e_k);
    j["fitted_rate"] = detail::number_or_null(s.fitted_rate);
    j["plateau"] = detail::number_or_null(s.plateau);
    j["envelope_satisfied"] = s.envelope_satisfied;
    nlohmann::json v = nlohmann::json::object();
    for (const auto& [name, verdict] : s.verdicts) v[name] = verdict.label();
    j["verdicts"] = v;
    j["seeds"] = {{"wpgd", s.seed}};
    j["versions"] = {{"wpglab", kVersion}, {"cxx", __cplusplus}};
    j["backend"] = s.backend;
    j["eta"] = detail::number_or_null(s.eta);
    j["steps"] = s.steps;
    j["n_particles"] = s.n_particles;
    j["tail_certificate"] = detail::number_or_null(s.tail_certificate);
    j["sup_norms"] = "exact over the finite state set";
    j["wall_time_s"] = s.wall_time_s;
    return j;
}

inline std::string plot_script() {
    return "# gnuplot script for trajectory.csv\n"
           "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set logscale y\n"
           "set xlabel 'k'\n"
           "set terminal pngcairo size 900,600\n"
           "set output 'trajectory.png'\n"
           "plot 'trajectory.csv' using \"k\":\"e_k\" with lines title 'e_k', \\\n"
           "     '' using \"k\":\"envelope\" with lines title 'envelope', \\\n"
           "     '' using \"k\":\"r_k_max\" with lines title 'r_k_max'\n";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Writes trajectory.csv, summary.json and optionally plot.gp into dir.
inline std::vector<std::filesystem::path> write_outputs(const std::vector<StepDiagnostics>& diags,
                                                        const RunSummary& summary, const std::filesystem::path& dir,
                                                        bool emit_plot_script = false, std::size_t every = 1) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files{dir / "trajectory.csv", dir / "summary.json"};
    write_text(files[0], trajectory_csv(diags, every));
    write_text(files[1], to_json(summary).dump(2) + "\n");
    if (emit_plot_script) {
        files.push_back(dir / "plot.gp");
        write_text(files.back(), plot_script());
    }
    return files;
}

} // namespace wpglab

#endif
