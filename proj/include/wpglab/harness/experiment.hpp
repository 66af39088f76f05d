#ifndef WPGLAB_HARNESS_EXPERIMENT_HPP
#define WPGLAB_HARNESS_EXPERIMENT_HPP

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "wpglab/bellman.hpp"
#include "wpglab/constants.hpp"
#include "wpglab/harness/config.hpp"
#include "wpglab/harness/outputs.hpp"
#include "wpglab/policy.hpp"
#include "wpglab/wpgd.hpp"

namespace wpglab {

/// A resolved config with the tabulated model and V* ready for runs.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        if (!cfg_.grid) resolve(cfg_);
        model_ = std::make_shared<const GridModel>(cfg_.spec, cfg_.grid);
        FixedPointOptions fp;
        fp.tol = cfg_.wpgd.solver_tol;
        vstar_ = solve_optimal(*model_, fp).value;
    }

    const ExperimentConfig& config() const { return cfg_; }
    const GridModel& model() const { return *model_; }
    const MdpSpec& spec() const { return model_->spec(); }
    const ValueFn& vstar() const { return vstar_; }
    const ConstantsReport& report() const { return cfg_.report; }
    ConstantsReport report_at(double eta) const { return at_eta(cfg_.report, eta); }

    GridPolicy initial_grid_policy() const { return init_gaussian_grid(spec(), model_->grid_ptr(), cfg_.init); }
    ParticleEnsemble initial_particles() const {
        return init_gaussian_particles(spec(), cfg_.init, cfg_.wpgd.n_particles, cfg_.wpgd.seed);
    }

    /// Budget for comparisons against exact identities: solver plus truncation error.
    double tol_check() const {
        double tail = std::max(cfg_.eps_tail, tail_certificate(model_->grid(), spec().beta, spec().tau));
        return std::max(1e-8, 10.0 * cfg_.wpgd.solver_tol + 10.0 * tail);
    }

    TrajectoryResult run(const WpgdConfig& w, const GridObserver& grid_obs = nullptr,
                         const ParticleObserver& particle_obs = nullptr) const {
        ConstantsReport rep = report_at(w.eta);
        if (w.backend == Backend::grid_oracle) return run_trajectory(*model_, initial_grid_policy(), w, rep, vstar_, grid_obs);
        ParticleEnsemble ens = init_gaussian_particles(spec(), cfg_.init, w.n_particles, w.seed);
        return run_trajectory(*model_, ens, w, rep, vstar_, particle_obs);
    }

    TrajectoryResult run() const { return run(cfg_.wpgd); }

    RunSummary summarize(const std::vector<StepDiagnostics>& diags, const WpgdConfig& w, double wall) const {
        RunSummary s;
        s.constants = report_at(w.eta);
        s.final_e_k = diags.empty() ? kNaN : diags.back().e_k;
        s.plateau = estimate_plateau(diags);
        s.fitted_rate = fit_geometric_rate(diags, s.plateau);
        s.envelope_satisfied = !diags.empty();
        for (const auto& d : diags) {
            double slack = tol_check() + 3.0 * d.mc_error;
            if (d.e_k > d.envelope + slack) s.envelope_satisfied = false;
        }
        s.seed = w.seed;
        s.backend = backend_name(w.backend);
        s.eta = w.eta;
        s.steps = w.steps;
        s.n_particles = w.backend == Backend::particles ? w.n_particles : 0;
        s.wall_time_s = wall;
        s.tail_certificate = tail_certificate(model_->grid(), spec().beta, spec().tau);
        return s;
    }

private:
    ExperimentConfig cfg_;
    std::shared_ptr<const GridModel> model_;
    ValueFn vstar_;
};

struct SweepRow {
    double eta = 0.0;
    double plateau = kNaN;
    double final_e_k = kNaN;
    double fitted_rate = kNaN;
    double ratio_to_previous = kNaN; // plateau(eta_i) / plateau(eta_{i-1})
};

/// Runs the configured trajectory once per step size.
inline std::vector<SweepRow> run_sweep(const Experiment& ex, const Vec& etas, bool force_eta) {
    std::vector<SweepRow> rows;
    for (double eta : etas) {
        WpgdConfig w = ex.config().wpgd;
        w.eta = eta;
        w.force_eta = force_eta || w.force_eta;
        auto diags = ex.run(w).diagnostics;
        SweepRow r;
        r.eta = eta;
        r.plateau = estimate_plateau(diags);
        r.final_e_k = diags.back().e_k;
        r.fitted_rate = fit_geometric_rate(diags, r.plateau);
        if (!rows.empty()) r.ratio_to_previous = r.plateau / rows.back().plateau;
        rows.push_back(r);
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "eta,plateau,final_e_k,fitted_rate,ratio_to_previous\n";
    for (const auto& r : rows) {
        out += format_number(r.eta);
        for (double x : {r.plateau, r.final_e_k, r.fitted_rate, r.ratio_to_previous}) out += "," + format_number(x);
        out += "\n";
    }
    return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace wpglab

#endif
