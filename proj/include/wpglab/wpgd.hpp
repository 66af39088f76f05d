#ifndef WPGLAB_WPGD_HPP
#define WPGLAB_WPGD_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wpglab/bellman.hpp"
#include "wpglab/constants.hpp"
#include "wpglab/core.hpp"
#include "wpglab/mixture.hpp"
#include "wpglab/model.hpp"
#include "wpglab/policy.hpp"
#include "wpglab/quadrature.hpp"

namespace wpglab {

enum class Backend { particles, grid_oracle };

inline Backend parse_backend(const std::string& name) {
    if (name == "particles") return Backend::particles;
    if (name == "grid_oracle") return Backend::grid_oracle;
    throw std::invalid_argument("unknown backend '" + name + "' (expected particles or grid_oracle)");
}

inline std::string backend_name(Backend b) { return b == Backend::particles ? "particles" : "grid_oracle"; }

struct WpgdConfig {
    double eta = 0.0;
    std::size_t steps = 1;
    std::size_t n_particles = 10'000;
    std::uint64_t seed = 0;
    Backend backend = Backend::grid_oracle;
    bool force_eta = false;
    double solver_tol = 1e-10;
    std::size_t diagnostics_every = 1;
    std::size_t n_mc = 0; // Monte-Carlo subsample for particle KL diagnostics; 0 = all particles
};

/// Drift b(s, a) written into out (length d).
using DriftFn = std::function<void(std::size_t s, std::span<const double> a, std::span<double> out)>;
/// Drift at grid node p of state s.
using GridDriftFn = std::function<void(std::size_t s, std::size_t p, std::span<double> out)>;
/// Test hook: fills the standard normal increments (n x d) of state s.
using NoiseFn = std::function<void(std::size_t s, std::span<double> xi)>;

// ---------------------------------------------------------------------------
// Particle Langevin step

struct LangevinOptions {
    double escape_radius = kInf;
    NoiseFn noise; // empty: seeded Gaussian noise
};

struct LangevinResult {
    ParticleEnsemble next;
    double drift_sq = 0.0; // max_s mean |b|^2 over the particles
};

/// A' = A + eta b(s, A) + sqrt(2 tau eta) xi for every particle of every state.
/// The new ensemble stores the exact law of A' given A: the mixture of
/// N(A_i + eta b(s, A_i), 2 tau eta I).
inline LangevinResult langevin_step(const ParticleEnsemble& ens, const DriftFn& drift, double eta, double tau,
                                    std::uint64_t seed, const LangevinOptions& opt = {}) {
    if (!(eta > 0.0)) throw std::invalid_argument("langevin_step: eta must be > 0");
    const std::size_t m = ens.num_states(), n = ens.n;
    const int d = ens.dim;
    const double var = 2.0 * tau * eta;
    const double noise_scale = std::sqrt(var);
    LangevinResult out;
    out.next.dim = d;
    out.next.n = n;
    out.next.step = ens.step + 1;
    out.next.positions.resize(m);
    out.next.initial = ens.initial;
    out.next.mixtures.resize(m);
    Vec drift_sq(m, 0.0);

    parallel_for(m, [&](std::size_t s) {
        Vec centers(n * d), xi(n * d), b(d);
        for (std::size_t i = 0; i < n; ++i) {
            auto a = ens.particle(s, i);
            drift(s, a, b);
            for (int k = 0; k < d; ++k) {
                if (!std::isfinite(b[k])) {
                    std::ostringstream msg;
                    msg << "langevin_step: non-finite drift at state " << s << ", particle " << i << ", step "
                        << ens.step;
                    throw NumericalError(msg.str());
                }
                centers[i * d + k] = a[k] + eta * b[k];
                drift_sq[s] += b[k] * b[k];
            }
        }
        drift_sq[s] /= static_cast<double>(n);
        if (opt.noise) {
            opt.noise(s, xi);
        } else {
            std::mt19937_64 rng(stream_seed(seed, s, ens.step + 1, 0x1a));
            std::normal_distribution<double> normal;
            for (double& x : xi) x = normal(rng);
        }
        Vec& pos = out.next.positions[s];
        pos.resize(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            double r2 = 0.0;
            for (int k = 0; k < d; ++k) {
                pos[i * d + k] = centers[i * d + k] + noise_scale * xi[i * d + k];
                r2 += pos[i * d + k] * pos[i * d + k];
            }
            if (std::sqrt(r2) > opt.escape_radius) {
                std::ostringstream msg;
                msg << "langevin_step: particle " << i << " of state " << s << " escaped to |a| = " << std::sqrt(r2)
                    << " > " << opt.escape_radius << " at step " << out.next.step
                    << " (step size too large for this drift?)";
                throw NumericalError(msg.str());
            }
        }
        out.next.mixtures[s] = std::make_shared<const IsotropicGaussianMixture>(d, std::move(centers), var);
    });
    out.drift_sq = max_of(drift_sq);
    return out;
}

/// Langevin step with the drift grad_a Q frozen at the snapshot held by q.
inline LangevinResult langevin_step(const ParticleEnsemble& ens, const QEval& q, double eta, std::uint64_t seed,
                                    const LangevinOptions& opt = {}) {
    const ValueFn* frozen = q.snapshot().get();
    DriftFn drift = [&q, frozen](std::size_t s, std::span<const double> a, std::span<double> out) {
        if (q.snapshot().get() != frozen) throw std::logic_error("langevin_step: drift snapshot changed within a step");
        q.gradient(s, a, out);
    };
    return langevin_step(ens, drift, eta, q.spec().tau, seed, opt);
}

// ---------------------------------------------------------------------------
// Grid oracle step

struct GridOracleResult {
    GridPolicy next;
    double mass_defect = 0.0; // max_s |1 - quadrature mass| before renormalization
    double drift_sq = 0.0;    // max_s E_pi |b|^2
};

namespace detail {

/// Unnormalized Gaussian exp(-(y_j - c)^2 / (2 v)) over the node window
/// [lo, hi], filled by a multiplicative recurrence outward from the node
/// closest to c. Returns false when the window misses the grid.
inline bool gaussian_window(std::span<const double> axis, double h, double c, double v, double reach, int& lo, int& hi,
                            Vec& g) {
    const int n = static_cast<int>(axis.size());
    const double x0 = axis[0];
    lo = std::max(0, static_cast<int>(std::floor((c - reach - x0) / h)));
    hi = std::min(n - 1, static_cast<int>(std::ceil((c + reach - x0) / h)));
    if (lo > hi) return false;
    int j0 = std::clamp(static_cast<int>(std::lround((c - x0) / h)), lo, hi);
    g.assign(hi - lo + 1, 0.0);
    const double q = std::exp(-h * h / v);
    double z = axis[j0] - c;
    g[j0 - lo] = std::exp(-0.5 * z * z / v);
    // upward: g_{j+1} = g_j r_j, r_j = exp(-(z_j h + h^2/2)/v), r_{j+1} = r_j q
    double r = std::exp(-(z * h + 0.5 * h * h) / v);
    for (int j = j0; j < hi; ++j) {
        g[j + 1 - lo] = g[j - lo] * r;
        r *= q;
    }
    r = std::exp(-(-z * h + 0.5 * h * h) / v);
    for (int j = j0; j > lo; --j) {
        g[j - 1 - lo] = g[j - lo] * r;
        r *= q;
    }
    return true;
}

} // namespace detail

/// Exact-quadrature pushforward-plus-convolution of every state's density:
/// pi'(y) = sum_p w_p pi(a_p) phi_{2 tau eta}(y - a_p - eta b(s, a_p)).
inline GridOracleResult grid_oracle_step(const GridPolicy& pi, const GridDriftFn& drift, double eta, double tau,
                                         double max_mass_defect = 1e-6) {
    if (!(eta > 0.0)) throw std::invalid_argument("grid_oracle_step: eta must be > 0");
    const ActionGrid& grid = pi.grid();
    const int d = grid.dim();
    if (d > 2) throw std::invalid_argument("grid_oracle_step: only d <= 2 is supported");
    const std::size_t m = pi.num_states(), np = grid.size();
    const int n = grid.points_per_dim();
    const double var = 2.0 * tau * eta;
    const double sigma = std::sqrt(var);
    if (sigma < grid.spacing())
        throw NumericalError("grid_oracle_step: noise scale sqrt(2 tau eta) is below the grid spacing; refine the grid");
    const double reach = 11.0 * sigma;
    const double norm = std::pow(2.0 * kPi * var, -0.5 * d);
    auto axis = grid.axis();
    auto w = grid.weights();
    const double h = grid.spacing();

    GridOracleResult out;
    out.next.states.resize(m);
    Vec defect(m, 0.0), dsq(m, 0.0);
    parallel_for(m, [&](std::size_t s) {
        Vec dens(np, 0.0), b(d), g0, g1;
        std::array<int, 3> idx{};
        double drift_acc = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double mass = pi[s].density(p) * w[p];
            if (mass == 0.0) continue;
            drift(s, p, b);
            auto a = grid.point(p);
            double c[2];
            for (int k = 0; k < d; ++k) {
                if (!std::isfinite(b[k])) throw NumericalError("grid_oracle_step: non-finite drift");
                c[k] = a[k] + eta * b[k];
                drift_acc += mass * b[k] * b[k];
            }
            double coef = mass * norm;
            int lo0, hi0, lo1, hi1;
            if (!detail::gaussian_window(axis, h, c[0], var, reach, lo0, hi0, g0)) continue;
            if (d == 1) {
                for (int j = lo0; j <= hi0; ++j) dens[j] += coef * g0[j - lo0];
            } else {
                if (!detail::gaussian_window(axis, h, c[1], var, reach, lo1, hi1, g1)) continue;
                for (int i = lo0; i <= hi0; ++i) {
                    double ci = coef * g0[i - lo0];
                    if (ci == 0.0) continue;
                    idx[0] = i;
                    idx[1] = lo1;
                    std::size_t row = grid.flatten(idx);
                    for (int j = lo1; j <= hi1; ++j) dens[row + (j - lo1)] += ci * g1[j - lo1];
                }
            }
        }
        (void)n;
        double total = 0.0;
        for (std::size_t p = 0; p < np; ++p) total += dens[p] * w[p];
        defect[s] = std::abs(1.0 - total);
        dsq[s] = drift_acc;
        Vec lv(np);
        for (std::size_t p = 0; p < np; ++p) lv[p] = dens[p] > 0.0 ? std::log(dens[p] / total) : -kInf;
        out.next.states[s] = LogDensityGrid{pi.grid_ptr(), std::move(lv)};
    });
    out.mass_defect = max_of(defect);
    out.drift_sq = max_of(dsq);
    if (out.mass_defect > max_mass_defect) {
        std::ostringstream msg;
        msg << "grid_oracle_step: renormalization mass defect " << out.mass_defect << " exceeds " << max_mass_defect
            << "; increase the grid radius (mass leaves the truncated domain) or the number of points";
        throw NumericalError(msg.str());
    }
    return out;
}

/// Grid oracle step with the drift grad_a Q_V taken from the model's node tables.
inline GridOracleResult grid_oracle_step(const GridPolicy& pi, const GridModel& model, const ValueFn& v, double eta,
                                         double max_mass_defect = 1e-6) {
    GridDriftFn drift = [&](std::size_t s, std::size_t p, std::span<double> out) { model.q_grad(v, s, p, out); };
    return grid_oracle_step(pi, drift, eta, model.spec().tau, max_mass_defect);
}

/// Grid oracle step with the drift evaluated through a QEval.
inline GridOracleResult grid_oracle_step(const GridPolicy& pi, const QEval& q, double eta,
                                         double max_mass_defect = 1e-6) {
    const ActionGrid& grid = pi.grid();
    GridDriftFn drift = [&](std::size_t s, std::size_t p, std::span<double> out) { q.gradient(s, grid.point(p), out); };
    return grid_oracle_step(pi, drift, eta, q.spec().tau, max_mass_defect);
}

// ---------------------------------------------------------------------------
// Fixed-target runs (unadjusted Langevin towards one density)

/// Runs K oracle steps with the drift frozen to a fixed target and returns
/// KL(mu_k || target) for k = 0..K, per step the max over states.
inline Vec fixed_target_run(const GridPolicy& pi0, const GridPolicy& target, const GridDriftFn& drift, double eta,
                            double tau, std::size_t steps) {
    if (target.num_states() != pi0.num_states()) throw std::invalid_argument("fixed_target_run: state count mismatch");
    auto kl_max = [&](const GridPolicy& mu) {
        double worst = -kInf;
        for (std::size_t s = 0; s < mu.num_states(); ++s) worst = std::max(worst, grid_kl(mu[s], target[s]));
        return worst;
    };
    Vec out;
    out.reserve(steps + 1);
    GridPolicy mu = pi0;
    out.push_back(kl_max(mu));
    for (std::size_t k = 0; k < steps; ++k) {
        mu = grid_oracle_step(mu, drift, eta, tau).next;
        out.push_back(kl_max(mu));
    }
    return out;
}

struct ParticleKlTrace {
    Vec kl;
    Vec se;
};

/// Particle version: KL(mu_k || target) estimated over the ensemble with the exact mixture law.
inline ParticleKlTrace fixed_target_run(const ParticleEnsemble& ens0,
                                        const std::function<double(std::size_t, std::span<const double>)>& target_log_density,
                                        const DriftFn& drift, double eta, double tau, std::size_t steps,
                                        std::uint64_t seed) {
    ParticleKlTrace out;
    ParticleEnsemble ens = ens0;
    auto record = [&] {
        double worst = -kInf, se = 0.0;
        for (std::size_t s = 0; s < ens.num_states(); ++s) {
            Diagnostics dg = divergences(ens, s, [&](std::span<const double> a) { return target_log_density(s, a); });
            if (dg.kl_to_ref > worst) {
                worst = dg.kl_to_ref;
                se = dg.kl_se;
            }
        }
        out.kl.push_back(worst);
        out.se.push_back(se);
    };
    record();
    for (std::size_t k = 0; k < steps; ++k) {
        ens = langevin_step(ens, drift, eta, tau, seed).next;
        record();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full trajectories

struct StepDiagnostics {
    std::size_t k = 0;
    double e_k = 0.0;          // |V* - V^{pi_k}|_inf, exact over the finite state set
    double r_k_max = 0.0;      // max_s (T* V^{pi_k} - V^{pi_k})(s)
    Vec residual;              // R_k(s)
    Vec kl_gibbs;              // tau KL(pi_k(.|s) || p^{pi_k}_s)
    Vec kl_gibbs_se;
    Vec kl_ref;                // KL(pi_k(.|s) || rho_beta)
    Vec kl_ref_se;
    double m_k = 0.0;          // max_s second moment
    double drift_sq = kNaN;    // max_s mean |b_k|^2 (step k -> k+1)
    double v_improve_min = kNaN;
    double envelope = 0.0;
    double mc_error = 0.0;     // Monte-Carlo error bar on V^{pi_k} (particles only)
    double mass_defect = kNaN; // grid oracle renormalization defect (step k -> k+1)
    Vec value;                 // V^{pi_k}

    // Step k -> k+1 improvement, grid backend only.
    Vec g_tpi;                 // T^{pi_{k+1}} V^{pi_k} - V^{pi_k}
    Vec g_resolvent;           // (I - gamma P^{pi_{k+1}})(V^{pi_{k+1}} - V^{pi_k})
    Vec g_kl;                  // tau (KL(pi_k||p^{pi_k}) - KL(pi_{k+1}||p^{pi_k}))
    Vec kl_next_to_gibbs;      // KL(pi_{k+1} || p^{pi_k}) (unscaled)

    double kl_gibbs_max() const { return kl_gibbs.empty() ? kNaN : max_of(kl_gibbs); }
    double kl_ref_max() const { return kl_ref.empty() ? kNaN : max_of(kl_ref); }
};

struct TrajectoryResult {
    std::vector<StepDiagnostics> diagnostics; // every step 0..K
    GridPolicy final_grid;
    ParticleEnsemble final_particles;
};

using GridObserver = std::function<void(const StepDiagnostics&, const GridPolicy&)>;
using ParticleObserver = std::function<void(const StepDiagnostics&, const ParticleEnsemble&)>;

namespace detail {

inline void check_trajectory_inputs(const GridModel& model, const WpgdConfig& cfg, const ConstantsReport& report,
                                    const ValueFn& vstar) {
    if (!(cfg.eta > 0.0)) throw std::invalid_argument("run_trajectory: eta must be > 0");
    if (cfg.steps < 1) throw std::invalid_argument("run_trajectory: steps must be >= 1");
    if (cfg.diagnostics_every < 1) throw std::invalid_argument("run_trajectory: diagnostics_every must be >= 1");
    if (vstar.size() != model.num_states()) throw std::invalid_argument("run_trajectory: V* has the wrong size");
    if (!cfg.force_eta && cfg.eta > report.eta0) {
        std::ostringstream msg;
        msg << "run_trajectory: eta = " << cfg.eta << " exceeds the feasible ceiling eta0 = " << report.eta0
            << " (binding constraint " << report.eta0_binding() << "); set force_eta to run anyway";
        throw std::invalid_argument(msg.str());
    }
}

} // namespace detail

/// WPGD on the grid oracle: exact policy evaluation, exact Gibbs targets and
/// the full improvement bookkeeping at every step.
inline TrajectoryResult run_trajectory(const GridModel& model, const GridPolicy& pi0, const WpgdConfig& cfg,
                                       const ConstantsReport& report, const ValueFn& vstar,
                                       const GridObserver& observer = nullptr) {
    detail::check_trajectory_inputs(model, cfg, report, vstar);
    const MdpSpec& spec = model.spec();
    const std::size_t m = model.num_states();
    const double tau = spec.tau, gamma = spec.gamma;
    const GaussianReference ref = reference_of(spec);
    const ActionGrid& grid = model.grid();
    const Vec ref_log = tabulate(grid, [&](std::span<const double> a) { return ref.log_density(a); });
    const LogDensityGrid ref_grid{model.grid_ptr(), ref_log};
    FixedPointOptions fp;
    fp.tol = cfg.solver_tol;

    TrajectoryResult res;
    GridPolicy pi = pi0;
    double e0 = 0.0;
    for (std::size_t k = 0;; ++k) {
        StepDiagnostics dg;
        dg.k = k;
        ValueFn v = solve_policy_value(pi, model, fp).value;
        GibbsPolicy gibbs = gibbs_policy(v, model);
        dg.value = v.values;
        dg.residual.resize(m);
        dg.kl_gibbs.resize(m);
        dg.kl_gibbs_se.assign(m, 0.0);
        dg.kl_ref.resize(m);
        dg.kl_ref_se.assign(m, 0.0);
        for (std::size_t s = 0; s < m; ++s) {
            dg.residual[s] = tau * gibbs.log_partition[s] - v[s];
            dg.kl_gibbs[s] = tau * grid_kl(pi[s], gibbs.density[s]);
            dg.kl_ref[s] = grid_kl(pi[s], ref_grid);
            dg.m_k = std::max(dg.m_k, second_moment(pi, s));
        }
        dg.r_k_max = max_of(dg.residual);
        dg.e_k = sup_distance(vstar.values, v.values);
        if (k == 0) e0 = dg.e_k;
        dg.envelope = envelope(report, e0, cfg.eta, static_cast<long long>(k));

        if (!res.diagnostics.empty()) {
            // Close the bookkeeping of step k-1 -> k now that V^{pi_k} is known.
            StepDiagnostics& prev = res.diagnostics.back();
            ValueFn v_prev(prev.value);
            PolicyMarginals pm = policy_marginals(pi, model);
            ValueFn tpi = apply_t_pi(v_prev, pm, gamma);
            prev.g_tpi.resize(m);
            prev.g_resolvent.resize(m);
            prev.v_improve_min = kInf;
            for (std::size_t s = 0; s < m; ++s) {
                prev.g_tpi[s] = tpi[s] - v_prev[s];
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += pm.kernel[s * m + j] * (v[j] - v_prev[j]);
                prev.g_resolvent[s] = (v[s] - v_prev[s]) - gamma * acc;
                prev.v_improve_min = std::min(prev.v_improve_min, v[s] - v_prev[s]);
            }
        }
        if (observer) observer(dg, pi);
        if (k == cfg.steps) {
            res.diagnostics.push_back(std::move(dg));
            break;
        }

        GridOracleResult step = grid_oracle_step(pi, model, v, cfg.eta);
        dg.drift_sq = step.drift_sq;
        dg.mass_defect = step.mass_defect;
        dg.kl_next_to_gibbs.resize(m);
        dg.g_kl.resize(m);
        for (std::size_t s = 0; s < m; ++s) {
            dg.kl_next_to_gibbs[s] = grid_kl(step.next[s], gibbs.density[s]);
            dg.g_kl[s] = dg.kl_gibbs[s] - tau * dg.kl_next_to_gibbs[s];
        }
        res.diagnostics.push_back(std::move(dg));
        pi = std::move(step.next);
    }
    res.final_grid = std::move(pi);
    return res;
}

/// WPGD with Langevin particles. Values carry the Monte-Carlo error of the
/// entropy term; Gibbs partitions still come from grid quadrature. KL fields are
/// filled every `diagnostics_every` steps and left empty otherwise.
inline TrajectoryResult run_trajectory(const GridModel& model, const ParticleEnsemble& ens0, const WpgdConfig& cfg,
                                       const ConstantsReport& report, const ValueFn& vstar,
                                       const ParticleObserver& observer = nullptr) {
    detail::check_trajectory_inputs(model, cfg, report, vstar);
    const MdpSpec& spec = model.spec();
    const std::size_t m = model.num_states();
    const double tau = spec.tau;
    const GaussianReference ref = reference_of(spec);
    LangevinOptions lopt;
    lopt.escape_radius = 10.0 * model.grid().radius();

    TrajectoryResult res;
    ParticleEnsemble ens = ens0;
    double e0 = 0.0;
    for (std::size_t k = 0;; ++k) {
        StepDiagnostics dg;
        dg.k = k;
        ParticleValue pv = policy_value(ens, spec);
        auto snapshot = std::make_shared<const ValueFn>(pv.value);
        GibbsPolicy gibbs = gibbs_policy(pv.value, model);
        dg.value = pv.value.values;
        dg.mc_error = pv.mc_error;
        dg.residual.resize(m);
        // Divergences are the expensive part; off-schedule steps keep only m_k.
        const bool full = k % cfg.diagnostics_every == 0 || k == cfg.steps;
        if (full) {
            dg.kl_gibbs.resize(m);
            dg.kl_gibbs_se.resize(m);
            dg.kl_ref.resize(m);
            dg.kl_ref_se.resize(m);
        }
        for (std::size_t s = 0; s < m; ++s) {
            dg.residual[s] = tau * gibbs.log_partition[s] - pv.value[s];
            if (!full) {
                dg.m_k = std::max(dg.m_k, second_moment(ens, s));
                continue;
            }
            Diagnostics to_gibbs = divergences(
                ens, s, [&](std::span<const double> a) { return gibbs.log_density_at(s, a); }, nullptr, cfg.n_mc, cfg.seed);
            Diagnostics to_ref = divergences(
                ens, s, [&](std::span<const double> a) { return ref.log_density(a); }, nullptr, cfg.n_mc, cfg.seed);
            dg.kl_gibbs[s] = tau * to_gibbs.kl_to_ref;
            dg.kl_gibbs_se[s] = tau * to_gibbs.kl_se;
            dg.kl_ref[s] = to_ref.kl_to_ref;
            dg.kl_ref_se[s] = to_ref.kl_se;
            dg.m_k = std::max(dg.m_k, to_ref.second_moment);
        }
        dg.r_k_max = max_of(dg.residual);
        dg.e_k = sup_distance(vstar.values, pv.value.values);
        if (k == 0) e0 = dg.e_k;
        dg.envelope = envelope(report, e0, cfg.eta, static_cast<long long>(k));
        if (!res.diagnostics.empty()) {
            StepDiagnostics& prev = res.diagnostics.back();
            prev.v_improve_min = kInf;
            for (std::size_t s = 0; s < m; ++s)
                prev.v_improve_min = std::min(prev.v_improve_min, pv.value[s] - prev.value[s]);
        }
        if (observer) observer(dg, ens);
        if (k == cfg.steps) {
            res.diagnostics.push_back(std::move(dg));
            break;
        }
        LangevinResult step = langevin_step(ens, QEval(snapshot, spec), cfg.eta, cfg.seed, lopt);
        dg.drift_sq = step.drift_sq;
        res.diagnostics.push_back(std::move(dg));
        ens = std::move(step.next);
    }
    res.final_particles = std::move(ens);
    return res;
}

} // namespace wpglab

#endif
