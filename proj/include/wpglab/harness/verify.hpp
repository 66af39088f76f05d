#ifndef WPGLAB_HARNESS_VERIFY_HPP
#define WPGLAB_HARNESS_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wpglab/bellman.hpp"
#include "wpglab/constants.hpp"
#include "wpglab/harness/experiment.hpp"
#include "wpglab/harness/outputs.hpp"
#include "wpglab/policy.hpp"
#include "wpglab/wpgd.hpp"

namespace wpglab {

struct CheckResult {
    std::string name;
    Verdict verdict;
    std::size_t cases = 0;
    double worst = kNaN; // largest violation margin seen (negative means slack)
};

namespace detail {

/// Tracks the worst "lhs - rhs" over many inequality cases lhs <= rhs.
class Tally {
public:
    void le(double lhs, double rhs, const std::string& where) {
        ++cases_;
        double margin = lhs - rhs;
        if (std::isnan(margin)) margin = kInf;
        if (margin > worst_) {
            worst_ = margin;
            if (margin > 0.0) {
                std::ostringstream msg;
                msg.precision(10);
                msg << where << ": " << lhs << " > " << rhs;
                first_failure_ = first_failure_.empty() ? msg.str() : first_failure_;
            }
        }
    }

    /// |a - b| <= rel * max(|a|, |b|) + abs
    void close(double a, double b, double rel, double abs, const std::string& where) {
        le(std::abs(a - b), rel * std::max(std::abs(a), std::abs(b)) + abs, where);
    }

    CheckResult finish(const std::string& name) const {
        CheckResult r;
        r.name = name;
        r.cases = cases_;
        r.worst = worst_;
        if (cases_ == 0) {
            r.verdict = {VerdictKind::skipped, "no applicable cases"};
        } else if (worst_ > 0.0) {
            r.verdict = {VerdictKind::fail, first_failure_};
        } else {
            r.verdict = {VerdictKind::pass, ""};
        }
        return r;
    }

private:
    std::size_t cases_ = 0;
    double worst_ = -kInf;
    std::string first_failure_;
};

inline std::string at(std::size_t k, std::size_t s) {
    return "k=" + std::to_string(k) + " s=" + std::to_string(s);
}

inline CheckResult skipped(const std::string& name, const std::string& reason) {
    return {name, {VerdictKind::skipped, reason}, 0, kNaN};
}

} // namespace detail

/// Runs the named identity and inequality checks. The default grid backend is
/// exact up to quadrature; the particle backend applies Monte-Carlo slack and
/// skips the checks that need exact densities.
class Verifier {
public:
    Verifier(const Experiment& ex, Backend backend = Backend::grid_oracle) : ex_(ex), backend_(backend) {
        w_ = ex.config().wpgd;
        w_.backend = backend;
        w_.diagnostics_every = 1;
        rep_ = ex.report_at(w_.eta);
        tol_ = ex.tol_check();
        feasible_ = w_.eta <= rep_.eta0;
        if (backend == Backend::grid_oracle) {
            traj_ = ex.run(w_, [this](const StepDiagnostics&, const GridPolicy& pi) {
                Vec m(pi.num_states());
                for (std::size_t s = 0; s < m.size(); ++s) m[s] = second_moment(pi, s);
                moments_.push_back(std::move(m));
            });
        } else {
            traj_ = ex.run(w_, nullptr, [this](const StepDiagnostics&, const ParticleEnsemble& ens) {
                Vec m(ens.num_states());
                for (std::size_t s = 0; s < m.size(); ++s) m[s] = second_moment(ens, s);
                moments_.push_back(std::move(m));
            });
        }
    }

    const std::vector<StepDiagnostics>& diagnostics() const { return traj_.diagnostics; }

    CheckResult run(const std::string& name) const {
        using Fn = CheckResult (Verifier::*)() const;
        static const std::vector<std::pair<std::string, Fn>> table{
            {"residual_identity", &Verifier::residual_identity},
            {"tstar_contraction", &Verifier::tstar_contraction},
            {"perf_diff", &Verifier::perf_diff},
            {"resolvent", &Verifier::resolvent},
            {"residual_vs_gap", &Verifier::residual_vs_gap},
            {"q_gradient_fd", &Verifier::q_gradient_fd},
            {"moment_bound", &Verifier::moment_bound},
            {"kl_one_step", &Verifier::kl_one_step},
            {"kl_to_bellman", &Verifier::kl_to_bellman},
            {"value_bounds", &Verifier::value_bounds},
            {"gaussian_kl_smoothing", &Verifier::gaussian_kl_smoothing},
            {"bounded_tilt_kl", &Verifier::bounded_tilt_kl},
            {"envelope", &Verifier::envelope_check},
            {"gaussian_second_moment", &Verifier::gaussian_second_moment}};
        for (const auto& [n, fn] : table)
            if (n == name) return (this->*fn)();
        throw std::invalid_argument("unknown check '" + name + "'");
    }

    std::vector<CheckResult> run_all(const std::vector<std::string>& names) const {
        std::vector<CheckResult> out;
        for (const auto& n : names) out.push_back(run(n));
        return out;
    }

private:
    bool grid() const { return backend_ == Backend::grid_oracle; }
    std::string infeasible_reason() const {
        std::ostringstream msg;
        msg << "eta " << w_.eta << " exceeds eta0 " << rep_.eta0 << "; the bound is not claimed";
        return msg.str();
    }

    double mc(const StepDiagnostics& d) const { return 3.0 * d.mc_error; }

    /// T* V^pi - V^pi = tau KL(pi || Gibbs(V^pi)) per state at every iterate.
    CheckResult residual_identity() const {
        if (!grid()) return detail::skipped("residual_identity", "grid backend only");
        detail::Tally t;
        for (const auto& d : traj_.diagnostics)
            for (std::size_t s = 0; s < d.residual.size(); ++s)
                t.close(d.residual[s], d.kl_gibbs[s], 1e-6, tol_, detail::at(d.k, s));
        // The residual computed through an independent T* sweep.
        const std::size_t n = traj_.diagnostics.size();
        for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 5)) {
            ValueFn v(traj_.diagnostics[i].value);
            ValueFn tv = apply_t_star(v, ex_.model());
            for (std::size_t s = 0; s < v.size(); ++s)
                t.close(tv[s] - v[s], traj_.diagnostics[i].kl_gibbs[s], 1e-6, tol_, "T* sweep " + detail::at(i, s));
        }
        return t.finish("residual_identity");
    }

    /// gamma-contraction and monotonicity of T* and T^pi, plus the ratio of
    /// successive value-iteration increments.
    CheckResult tstar_contraction() const {
        detail::Tally t;
        const GridModel& model = ex_.model();
        const std::size_t m = model.num_states();
        const double gamma = model.spec().gamma;
        std::mt19937_64 rng(w_.seed ^ 0x7c0ffee);
        std::uniform_real_distribution<double> unif(-5.0, 5.0);
        GridPolicy pi0 = ex_.initial_grid_policy();
        PolicyMarginals pm = policy_marginals(pi0, model);
        for (int trial = 0; trial < 20; ++trial) {
            ValueFn v(m, 0.0), w(m, 0.0);
            for (std::size_t s = 0; s < m; ++s) {
                v[s] = unif(rng);
                w[s] = unif(rng);
            }
            double dist = sup_distance(v.values, w.values);
            ValueFn tv = apply_t_star(v, model), tw = apply_t_star(w, model);
            t.le(sup_distance(tv.values, tw.values), gamma * dist + 1e-9, "T* trial " + std::to_string(trial));
            ValueFn pv = apply_t_pi(v, pm, gamma), pw = apply_t_pi(w, pm, gamma);
            t.le(sup_distance(pv.values, pw.values), gamma * dist + 1e-9, "T^pi trial " + std::to_string(trial));
            // monotonicity: hi >= v pointwise
            ValueFn hi = v;
            for (std::size_t s = 0; s < m; ++s) hi[s] += std::abs(unif(rng));
            ValueFn thi = apply_t_star(hi, model);
            for (std::size_t s = 0; s < m; ++s) t.le(tv[s], thi[s] + 1e-9, "monotone trial " + std::to_string(trial));
            // Gibbs variational inequality T* V >= T^pi V
            for (std::size_t s = 0; s < m; ++s) t.le(pv[s], tv[s] + 1e-9, "T^pi <= T* trial " + std::to_string(trial));
        }
        FixedPointOptions fp;
        fp.tol = w_.solver_tol;
        FixedPointResult fr = solve_optimal(model, fp);
        const Vec& inc = fr.increments;
        // Below ~1e-6 |V| the increments are dominated by rounding of V itself,
        // and their ratio no longer measures the operator.
        const double floor = 1e-6 * (1.0 + sup_norm(fr.value.values));
        for (std::size_t j = 1; j < inc.size(); ++j)
            if (inc[j] > floor)
                t.le(inc[j] / inc[j - 1], gamma + 1e-9, "increment ratio j=" + std::to_string(j));
        return t.finish("tstar_contraction");
    }

    CheckResult perf_diff() const {
        if (!grid()) return detail::skipped("perf_diff", "grid backend only");
        detail::Tally t;
        const GridModel& model = ex_.model();
        GridPolicy pi0 = ex_.initial_grid_policy();
        std::vector<std::pair<std::string, GridPolicy>> others;
        others.emplace_back("Gibbs(V*)", gibbs_policy(ex_.vstar(), model).density);
        others.emplace_back("final iterate", traj_.final_grid);
        for (const auto& [label, other] : others) {
            PerformanceDifference pd = performance_difference(pi0, other, model);
            t.le(std::abs(pd.lhs - pd.rhs), 1e-5 * (1.0 + std::abs(pd.lhs)), "pi0 -> " + label);
        }
        PerformanceDifference same = performance_difference(pi0, pi0, model);
        t.le(std::abs(same.lhs) + std::abs(same.rhs), 1e-10, "pi0 -> pi0");
        return t.finish("perf_diff");
    }

    CheckResult resolvent() const {
        if (!grid()) return detail::skipped("resolvent", "grid backend only");
        detail::Tally t;
        for (const auto& d : traj_.diagnostics) {
            if (d.g_resolvent.empty()) continue;
            for (std::size_t s = 0; s < d.g_tpi.size(); ++s) {
                t.close(d.g_resolvent[s], d.g_tpi[s], 1e-5, tol_, "resolvent vs T^pi " + detail::at(d.k, s));
                t.close(d.g_kl[s], d.g_tpi[s], 1e-5, tol_, "KL form vs T^pi " + detail::at(d.k, s));
            }
        }
        return t.finish("resolvent");
    }

    CheckResult residual_vs_gap() const {
        detail::Tally t;
        const double gamma = ex_.spec().gamma;
        for (const auto& d : traj_.diagnostics)
            t.le((1.0 - gamma) * d.e_k, d.r_k_max + tol_ + mc(d), "k=" + std::to_string(d.k));
        return t.finish("residual_vs_gap");
    }

    /// Analytic Q-gradient against central differences, and the Gibbs score identity.
    CheckResult q_gradient_fd() const {
        detail::Tally t;
        const MdpSpec& spec = ex_.spec();
        const std::size_t m = spec.num_states(), d = spec.dim();
        const double r = 0.5 * ex_.model().grid().radius();
        const double h = 1e-5;
        std::mt19937_64 rng(w_.seed ^ 0xfdfdull);
        std::uniform_real_distribution<double> unif(-r, r);
        std::uniform_int_distribution<std::size_t> pick(0, m - 1);
        const ValueFn& v = ex_.vstar();
        GibbsPolicy gibbs = gibbs_policy(v, ex_.model());
        Vec a(d), ap(d), am(d);
        for (int trial = 0; trial < 100; ++trial) {
            std::size_t s = pick(rng);
            for (auto& x : a) x = unif(rng);
            Vec an = q_gradient(v, s, a, spec);
            double norm = std::sqrt(squared_norm(an));
            for (std::size_t c = 0; c < d; ++c) {
                ap = a;
                am = a;
                ap[c] += h;
                am[c] -= h;
                double fd = (q_value(v, s, ap, spec) - q_value(v, s, am, spec)) / (2.0 * h);
                t.le(std::abs(fd - an[c]), 1e-6 * std::max(norm, 1e-2), "Q trial " + std::to_string(trial));
                double score = spec.tau * (gibbs.log_density_at(s, ap) - gibbs.log_density_at(s, am)) / (2.0 * h);
                t.le(std::abs(score - an[c]), 1e-5 * std::max(norm, 1.0), "Gibbs score trial " + std::to_string(trial));
            }
        }
        return t.finish("q_gradient_fd");
    }

    CheckResult moment_bound() const {
        if (w_.eta > 1.0 / (4.0 * rep_.beta)) return detail::skipped("moment_bound", "eta exceeds 1/(4β)");
        detail::Tally t;
        double bound = std::max(rep_.profile.m0, rep_.m_inf_eta);
        double slack = grid() ? tol_ : 4.0 / std::sqrt(static_cast<double>(w_.n_particles));
        for (const auto& d : traj_.diagnostics) t.le(d.m_k, bound + slack, "k=" + std::to_string(d.k));
        return t.finish("moment_bound");
    }

    CheckResult kl_one_step() const {
        if (!grid()) return detail::skipped("kl_one_step", "grid backend only");
        if (!feasible_) return detail::skipped("kl_one_step", infeasible_reason());
        detail::Tally t;
        const double tau = rep_.tau;
        const double contraction = std::exp(-rep_.alpha_bar * tau * w_.eta);
        for (const auto& d : traj_.diagnostics) {
            if (d.kl_next_to_gibbs.empty()) continue;
            for (std::size_t s = 0; s < d.kl_gibbs.size(); ++s)
                t.le(d.kl_next_to_gibbs[s], contraction * d.kl_gibbs[s] / tau + rep_.delta_eta + tol_, detail::at(d.k, s));
        }
        return t.finish("kl_one_step");
    }

    CheckResult kl_to_bellman() const {
        if (!grid()) return detail::skipped("kl_to_bellman", "grid backend only");
        if (!feasible_) return detail::skipped("kl_to_bellman", infeasible_reason());
        detail::Tally t;
        const double tau = rep_.tau, gamma = rep_.gamma;
        for (const auto& d : traj_.diagnostics) {
            if (d.g_tpi.empty()) continue;
            for (std::size_t s = 0; s < d.g_tpi.size(); ++s)
                t.le(rep_.c_eta * d.residual[s] - tau * rep_.delta_eta - tol_, d.g_tpi[s], "g_k " + detail::at(d.k, s));
            t.le(-tau / (1.0 - gamma) * rep_.delta_eta - tol_, d.v_improve_min, "value increment k=" + std::to_string(d.k));
        }
        return t.finish("kl_to_bellman");
    }

    CheckResult value_bounds() const {
        detail::Tally t;
        const ValueFn& vs = ex_.vstar();
        for (std::size_t s = 0; s < vs.size(); ++s) {
            t.le(vs[s], rep_.u_bound + tol_, "V* upper s=" + std::to_string(s));
            t.le(rep_.l_star - tol_, vs[s], "V* lower s=" + std::to_string(s));
        }
        for (const auto& d : traj_.diagnostics)
            for (std::size_t s = 0; s < d.value.size(); ++s) {
                t.le(d.value[s], rep_.u_bound + tol_ + mc(d), "V^pi " + detail::at(d.k, s));
                t.le(d.value[s], vs[s] + tol_ + mc(d), "V^pi <= V* " + detail::at(d.k, s));
            }
        return t.finish("value_bounds");
    }

    /// KL(pi_k || rho_beta) <= beta M / (2 tau) + log Z - (d/2) log(4 pi e tau eta) for every k >= 1.
    CheckResult gaussian_kl_smoothing() const {
        detail::Tally t;
        const double beta = rep_.beta, tau = rep_.tau;
        const double offset = rep_.log_z_beta - 0.5 * rep_.d * std::log(4.0 * kPi * std::exp(1.0) * tau * w_.eta);
        for (std::size_t i = 1; i < traj_.diagnostics.size(); ++i) {
            const auto& d = traj_.diagnostics[i];
            for (std::size_t s = 0; s < d.kl_ref.size(); ++s) {
                double m = moments_[i][s];
                t.le(d.kl_ref[s], beta * m / (2.0 * tau) + offset + tol_ + 3.0 * d.kl_ref_se[s], detail::at(d.k, s));
            }
        }
        return t.finish("gaussian_kl_smoothing");
    }

    /// KL(pi || p) <= KL(pi || rho_beta) + 2 sup|psi| with p the Gibbs policy of V^pi.
    CheckResult bounded_tilt_kl() const {
        detail::Tally t;
        const GridModel& model = ex_.model();
        const double tau = rep_.tau;
        for (const auto& d : traj_.diagnostics) {
            GibbsPolicy g = gibbs_policy(ValueFn(d.value), model);
            for (std::size_t s = 0; s < d.kl_ref.size(); ++s) {
                double c = 0.0;
                for (std::size_t p = 0; p < model.num_points(); ++p)
                    c = std::max(c, std::abs(g.tilt(s, model.grid().point(p))));
                double slack = tol_ + 3.0 * (d.kl_ref_se[s] + d.kl_gibbs_se[s] / tau);
                t.le(d.kl_gibbs[s] / tau, d.kl_ref[s] + 2.0 * c + slack, detail::at(d.k, s));
            }
        }
        return t.finish("bounded_tilt_kl");
    }

    CheckResult envelope_check() const {
        if (!feasible_) return detail::skipped("envelope", infeasible_reason());
        detail::Tally t;
        for (const auto& d : traj_.diagnostics)
            t.le(d.e_k, d.envelope + tol_ + mc(d), "k=" + std::to_string(d.k));
        return t.finish("envelope");
    }

    /// c E|a|^2 <= KL(pi || rho_beta) + (d/2) log 2 with c = beta / (4 tau).
    CheckResult gaussian_second_moment() const {
        detail::Tally t;
        const double c = rep_.beta / (4.0 * rep_.tau);
        const double log_mgf = 0.5 * rep_.d * std::log(2.0);
        for (std::size_t i = 0; i < traj_.diagnostics.size(); ++i) {
            const auto& d = traj_.diagnostics[i];
            for (std::size_t s = 0; s < d.kl_ref.size(); ++s) {
                double m = moments_[i][s];
                double slack = tol_ + 3.0 * d.kl_ref_se[s] +
                               (grid() ? 0.0 : c * 4.0 * std::max(1.0, m) / std::sqrt(static_cast<double>(w_.n_particles)));
                t.le(c * m, d.kl_ref[s] + log_mgf + slack, detail::at(d.k, s));
            }
        }
        return t.finish("gaussian_second_moment");
    }

    const Experiment& ex_;
    Backend backend_;
    WpgdConfig w_;
    ConstantsReport rep_;
    double tol_ = 1e-8;
    bool feasible_ = true;
    TrajectoryResult traj_;
    std::vector<Vec> moments_; // per step, per state second moments
};

inline bool all_passed(const std::vector<CheckResult>& results) {
    return std::none_of(results.begin(), results.end(),
                        [](const CheckResult& r) { return r.verdict.kind == VerdictKind::fail; });
}

} // namespace wpglab

#endif
