#ifndef WPGLAB_BELLMAN_HPP
#define WPGLAB_BELLMAN_HPP

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wpglab/core.hpp"
#include "wpglab/model.hpp"
#include "wpglab/policy.hpp"
#include "wpglab/quadrature.hpp"

namespace wpglab {

/// A value function over the finite state set. All sup-norms over it are exact.
struct ValueFn {
    Vec values;

    ValueFn() = default;
    explicit ValueFn(Vec v) : values(std::move(v)) {}
    ValueFn(std::size_t m, double c) : values(m, c) {}

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t s) const { return values[s]; }
    double& operator[](std::size_t s) { return values[s]; }
};

inline ValueFn operator-(const ValueFn& a, const ValueFn& b) {
    ValueFn out(a.values);
    for (std::size_t s = 0; s < out.size(); ++s) out[s] -= b[s];
    return out;
}

/// Model quantities tabulated on the grid nodes: r~(s,a), p(.|s,a) and their
/// action gradients. Off-grid queries go through the MdpSpec callables.
class GridModel {
public:
    static constexpr std::size_t kMaxTableEntries = 40'000'000;

    GridModel(MdpSpec spec, GridPtr grid) : spec_(std::move(spec)), grid_(std::move(grid)) {
        m_ = spec_.num_states();
        d_ = spec_.dim();
        np_ = grid_->size();
        if (static_cast<int>(d_) != grid_->dim()) throw std::invalid_argument("GridModel: grid dimension mismatch");
        if (m_ * m_ * np_ * (1 + d_) > kMaxTableEntries)
            throw std::invalid_argument("GridModel: state/grid tables exceed the memory guard");
        reward_tilde_.resize(m_ * np_);
        reward_grad_.resize(m_ * np_ * d_);
        kernel_.resize(m_ * np_ * m_);
        kernel_grad_.resize(m_ * np_ * m_ * d_);
        parallel_for(m_, [&](std::size_t s) {
            for (std::size_t p = 0; p < np_; ++p) {
                auto a = grid_->point(p);
                reward_tilde_[s * np_ + p] = spec_.penalized_reward(s, a);
                spec_.reward_grad(s, a, std::span(reward_grad_).subspan((s * np_ + p) * d_, d_));
                spec_.trans_prob(s, a, std::span(kernel_).subspan((s * np_ + p) * m_, m_));
                spec_.trans_prob_grad(s, a, std::span(kernel_grad_).subspan((s * np_ + p) * m_ * d_, m_ * d_));
            }
        });
    }

    const MdpSpec& spec() const { return spec_; }
    const ActionGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    std::size_t num_states() const { return m_; }
    std::size_t num_points() const { return np_; }
    std::size_t dim() const { return d_; }

    double reward_tilde(std::size_t s, std::size_t p) const { return reward_tilde_[s * np_ + p]; }
    std::span<const double> reward_grad(std::size_t s, std::size_t p) const {
        return {reward_grad_.data() + (s * np_ + p) * d_, d_};
    }
    std::span<const double> kernel(std::size_t s, std::size_t p) const { return {kernel_.data() + (s * np_ + p) * m_, m_}; }
    std::span<const double> kernel_grad(std::size_t s, std::size_t p) const {
        return {kernel_grad_.data() + (s * np_ + p) * m_ * d_, m_ * d_};
    }

    /// Q_V(s, a_p) = r~(s,a_p) + gamma sum_s' V(s') p(s'|s,a_p)
    double q(const ValueFn& v, std::size_t s, std::size_t p) const {
        auto k = kernel(s, p);
        double acc = 0.0;
        for (std::size_t j = 0; j < m_; ++j) acc += k[j] * v[j];
        return reward_tilde(s, p) + spec_.gamma * acc;
    }

    Vec q_values(const ValueFn& v, std::size_t s) const {
        Vec out(np_);
        for (std::size_t p = 0; p < np_; ++p) out[p] = q(v, s, p);
        return out;
    }

    /// grad_a Q_V(s, a_p) at a grid node.
    void q_grad(const ValueFn& v, std::size_t s, std::size_t p, std::span<double> out) const {
        auto a = grid_->point(p);
        auto gr = reward_grad(s, p);
        auto gk = kernel_grad(s, p);
        for (std::size_t c = 0; c < d_; ++c) {
            double t = 0.0;
            for (std::size_t j = 0; j < m_; ++j) t += v[j] * gk[j * d_ + c];
            out[c] = gr[c] - spec_.beta * a[c] + spec_.gamma * t;
        }
    }

private:
    MdpSpec spec_;
    GridPtr grid_;
    std::size_t m_ = 0, d_ = 0, np_ = 0;
    Vec reward_tilde_, reward_grad_, kernel_, kernel_grad_;
};

// ---------------------------------------------------------------------------
// Off-grid Q evaluation

/// Analytic grad_a Q_V(s,a) = grad r(s,a) - beta a + gamma sum_s' V(s') grad p(s'|s,a).
inline void q_gradient(const ValueFn& v, std::size_t s, std::span<const double> a, const MdpSpec& spec,
                       std::span<double> out) {
    const std::size_t m = spec.num_states(), d = spec.dim();
    thread_local Vec gk, gr;
    gk.resize(m * d);
    gr.resize(d);
    spec.reward_grad(s, a, gr);
    spec.trans_prob_grad(s, a, gk);
    for (std::size_t c = 0; c < d; ++c) {
        double t = 0.0;
        for (std::size_t j = 0; j < m; ++j) t += v[j] * gk[j * d + c];
        out[c] = gr[c] - spec.beta * a[c] + spec.gamma * t;
    }
}

inline Vec q_gradient(const ValueFn& v, std::size_t s, std::span<const double> a, const MdpSpec& spec) {
    Vec out(spec.dim());
    q_gradient(v, s, a, spec, out);
    return out;
}

inline double q_value(const ValueFn& v, std::size_t s, std::span<const double> a, const MdpSpec& spec) {
    thread_local Vec prob;
    prob.resize(spec.num_states());
    spec.trans_prob(s, a, prob);
    double acc = 0.0;
    for (std::size_t j = 0; j < prob.size(); ++j) acc += prob[j] * v[j];
    return spec.penalized_reward(s, a) + spec.gamma * acc;
}

/// Q_V for a frozen value snapshot. Every query made through one QEval sees
/// the same ValueFn object.
class QEval {
public:
    QEval(std::shared_ptr<const ValueFn> value, const MdpSpec& spec) : value_(std::move(value)), spec_(&spec) {
        if (!value_ || value_->size() != spec.num_states()) throw std::invalid_argument("QEval: value size mismatch");
    }

    double q(std::size_t s, std::span<const double> a) const { return q_value(*value_, s, a, *spec_); }
    void gradient(std::size_t s, std::span<const double> a, std::span<double> out) const {
        q_gradient(*value_, s, a, *spec_, out);
    }
    const std::shared_ptr<const ValueFn>& snapshot() const { return value_; }
    const ValueFn& value() const { return *value_; }
    const MdpSpec& spec() const { return *spec_; }

private:
    std::shared_ptr<const ValueFn> value_;
    const MdpSpec* spec_;
};

// ---------------------------------------------------------------------------
// Policy-induced reward and kernel

/// r^pi(s) = E_pi[r~ - tau log pi], P^pi(s'|s) = E_pi[p(s'|s,a)], plus the
/// standard error of r^pi when it is a Monte-Carlo estimate.
struct PolicyMarginals {
    Vec rbar;
    Vec kernel; // m x m row-major
    Vec rbar_se;
};

inline PolicyMarginals policy_marginals(const GridPolicy& pi, const GridModel& model) {
    const std::size_t m = model.num_states(), np = model.num_points();
    if (pi.num_states() != m) throw std::invalid_argument("policy has the wrong number of states");
    const double tau = model.spec().tau;
    auto w = model.grid().weights();
    PolicyMarginals out{Vec(m, 0.0), Vec(m * m, 0.0), Vec(m, 0.0)};
    parallel_for(m, [&](std::size_t s) {
        const LogDensityGrid& dens = pi[s];
        double r = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double mass = dens.density(p) * w[p];
            if (mass == 0.0) continue;
            double lp = std::max(dens.log_values[p], kLogUnderflow);
            r += mass * (model.reward_tilde(s, p) - tau * lp);
            auto k = model.kernel(s, p);
            for (std::size_t j = 0; j < m; ++j) out.kernel[s * m + j] += mass * k[j];
        }
        if (!std::isfinite(r)) throw NumericalError("policy evaluation: non-finite entropy-regularized reward");
        out.rbar[s] = r;
    });
    return out;
}

/// Monte-Carlo marginals over a particle ensemble, using the ensemble's exact law for log pi.
inline PolicyMarginals policy_marginals(const ParticleEnsemble& ens, const MdpSpec& spec) {
    const std::size_t m = spec.num_states();
    if (ens.num_states() != m) throw std::invalid_argument("ensemble has the wrong number of states");
    PolicyMarginals out{Vec(m, 0.0), Vec(m * m, 0.0), Vec(m, 0.0)};
    const double tau = spec.tau;
    const double n = static_cast<double>(ens.n);
    parallel_for(m, [&](std::size_t s) {
        Vec prob(m);
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < ens.n; ++i) {
            auto a = ens.particle(s, i);
            double x = spec.penalized_reward(s, a) - tau * log_density(ens, s, a);
            sum += x;
            sum2 += x * x;
            spec.trans_prob(s, a, prob);
            for (std::size_t j = 0; j < m; ++j) out.kernel[s * m + j] += prob[j];
        }
        for (std::size_t j = 0; j < m; ++j) out.kernel[s * m + j] /= n;
        double mean = sum / n;
        if (!std::isfinite(mean)) throw NumericalError("policy evaluation: non-finite Monte-Carlo reward");
        out.rbar[s] = mean;
        out.rbar_se[s] = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / std::max(1.0, n - 1.0));
    });
    return out;
}

namespace detail {

inline Eigen::MatrixXd resolvent_matrix(const Vec& kernel, std::size_t m, double gamma) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) a(i, j) -= gamma * kernel[i * m + j];
    return a;
}

inline Vec to_vec(const Eigen::VectorXd& x) { return Vec(x.data(), x.data() + x.size()); }

} // namespace detail

/// Solves (I - gamma P) V = r directly.
inline ValueFn solve_linear_value(const PolicyMarginals& pm, double gamma) {
    const std::size_t m = pm.rbar.size();
    Eigen::MatrixXd a = detail::resolvent_matrix(pm.kernel, m, gamma);
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(pm.rbar.data(), m);
    Eigen::VectorXd x = a.partialPivLu().solve(r);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i])) throw NumericalError("policy evaluation: singular Bellman system");
    return ValueFn(detail::to_vec(x));
}

// ---------------------------------------------------------------------------
// Operators

/// (T^pi V)(s) = r^pi(s) + gamma sum_s' P^pi(s'|s) V(s') from precomputed marginals.
inline ValueFn apply_t_pi(const ValueFn& v, const PolicyMarginals& pm, double gamma) {
    const std::size_t m = v.size();
    if (pm.rbar.size() != m) throw std::invalid_argument("apply_t_pi: value size mismatch");
    ValueFn out(pm.rbar);
    for (std::size_t s = 0; s < m; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += pm.kernel[s * m + j] * v[j];
        out[s] += gamma * acc;
    }
    return out;
}

inline ValueFn apply_t_pi(const ValueFn& v, const GridPolicy& pi, const GridModel& model) {
    return apply_t_pi(v, policy_marginals(pi, model), model.spec().gamma);
}

/// (T* V)(s) = tau log int exp(Q_V(s,a)/tau) da.
inline ValueFn apply_t_star(const ValueFn& v, const GridModel& model) {
    const std::size_t m = model.num_states();
    if (v.size() != m) throw std::invalid_argument("apply_t_star: value size mismatch");
    const double tau = model.spec().tau;
    ValueFn out(m, 0.0);
    parallel_for(m, [&](std::size_t s) {
        Vec g = model.q_values(v, s);
        for (double& x : g) x /= tau;
        out[s] = tau * log_integral_exp(g, model.grid());
    });
    return out;
}

enum class FixedPointKind { policy_eval, optimality };
enum class SolveMethod { automatic, iterate, direct };

struct FixedPointOptions {
    double tol = 1e-10;
    std::size_t max_iter = 100'000;
    SolveMethod method = SolveMethod::automatic;
};

struct FixedPointResult {
    ValueFn value;
    std::size_t iterations = 0;
    Vec increments; // |V_{j+1} - V_j|_inf per sweep
    bool direct = false;
};

namespace detail {

template <class Op>
FixedPointResult iterate_to_fixed_point(Op&& op, std::size_t m, double gamma, const FixedPointOptions& opt) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("solve_fixed_point: tol must be > 0");
    FixedPointResult res;
    res.value = ValueFn(m, 0.0);
    const double stop = opt.tol * (1.0 - gamma) / gamma;
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        ValueFn next = op(res.value);
        double inc = sup_distance(next.values, res.value.values);
        res.increments.push_back(inc);
        res.value = std::move(next);
        res.iterations = it + 1;
        if (!std::isfinite(inc)) throw NumericalError("solve_fixed_point: iteration diverged");
        if (inc <= stop) return res;
    }
    throw NumericalError("solve_fixed_point: max_iter exceeded before tolerance " + std::to_string(opt.tol));
}

} // namespace detail

inline FixedPointResult solve_policy_value(const GridPolicy& pi, const GridModel& model, const FixedPointOptions& opt = {}) {
    const std::size_t m = model.num_states();
    const double gamma = model.spec().gamma;
    PolicyMarginals pm = policy_marginals(pi, model);
    bool direct = opt.method == SolveMethod::direct || (opt.method == SolveMethod::automatic && m <= 512);
    if (direct) {
        FixedPointResult res;
        res.value = solve_linear_value(pm, gamma);
        res.direct = true;
        return res;
    }
    return detail::iterate_to_fixed_point([&](const ValueFn& v) { return apply_t_pi(v, pm, gamma); }, m, gamma, opt);
}

inline FixedPointResult solve_optimal(const GridModel& model, const FixedPointOptions& opt = {}) {
    return detail::iterate_to_fixed_point([&](const ValueFn& v) { return apply_t_star(v, model); }, model.num_states(),
                                          model.spec().gamma, opt);
}

/// Fixed point of T^pi (kind = policy_eval, pi required) or T* (kind = optimality).
inline FixedPointResult solve_fixed_point(FixedPointKind kind, const GridPolicy* pi, const GridModel& model,
                                          const FixedPointOptions& opt = {}) {
    if (kind == FixedPointKind::optimality) return solve_optimal(model, opt);
    if (pi == nullptr) throw std::invalid_argument("solve_fixed_point: policy evaluation needs a policy");
    return solve_policy_value(*pi, model, opt);
}

inline ValueFn policy_value(const GridPolicy& pi, const GridModel& model) { return solve_policy_value(pi, model).value; }

struct ParticleValue {
    ValueFn value;
    double mc_error = 0.0; // tau-free bound: max_s se(r^pi)(s) / (1 - gamma)
};

inline ParticleValue policy_value(const ParticleEnsemble& ens, const MdpSpec& spec) {
    PolicyMarginals pm = policy_marginals(ens, spec);
    ParticleValue out{solve_linear_value(pm, spec.gamma), 0.0};
    out.mc_error = max_of(pm.rbar_se) / (1.0 - spec.gamma);
    return out;
}

// ---------------------------------------------------------------------------
// Gibbs policies

/// Per-state Gibbs densities exp(Q_V/tau)/Z on the grid. log_density_at()
/// evaluates the same density off-grid from the model callables.
struct GibbsPolicy {
    GridPolicy density;
    Vec log_partition;
    std::shared_ptr<const ValueFn> value;
    const MdpSpec* spec = nullptr;

    double log_density_at(std::size_t s, std::span<const double> a) const {
        return q_value(*value, s, a, *spec) / spec->tau - log_partition[s];
    }

    /// psi(s,a) = (r(s,a) + gamma sum V p)/tau, the bounded tilt relative to rho_beta.
    double tilt(std::size_t s, std::span<const double> a) const {
        return (q_value(*value, s, a, *spec) + 0.5 * spec->beta * squared_norm(a)) / spec->tau;
    }
};

inline GibbsPolicy gibbs_policy(const ValueFn& v, const GridModel& model) {
    const std::size_t m = model.num_states();
    const double tau = model.spec().tau;
    GibbsPolicy out;
    out.value = std::make_shared<const ValueFn>(v);
    out.spec = &model.spec();
    out.log_partition.assign(m, 0.0);
    out.density.states.resize(m);
    parallel_for(m, [&](std::size_t s) {
        Vec g = model.q_values(v, s);
        for (double& x : g) x /= tau;
        double lz = log_integral_exp(g, model.grid());
        for (double& x : g) x -= lz;
        out.log_partition[s] = lz;
        out.density.states[s] = LogDensityGrid{model.grid_ptr(), std::move(g)};
    });
    return out;
}

// ---------------------------------------------------------------------------
// Occupancy and performance difference

/// d^pi = (1-gamma) rho0^T (I - gamma P^pi)^{-1}
inline Vec occupancy(const Vec& kernel, const MdpSpec& spec) {
    const std::size_t m = spec.num_states();
    if (m > 512) throw std::invalid_argument("occupancy: direct solve limited to 512 states");
    Eigen::MatrixXd a = detail::resolvent_matrix(kernel, m, spec.gamma);
    Eigen::VectorXd rho = Eigen::Map<const Eigen::VectorXd>(spec.rho0.data(), m);
    Eigen::VectorXd x = a.transpose().partialPivLu().solve(rho);
    Vec d(m);
    double total = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
        if (!std::isfinite(x[s])) throw NumericalError("occupancy: singular system");
        d[s] = (1.0 - spec.gamma) * x[s];
        total += d[s];
    }
    for (double& v : d) v /= total;
    return d;
}

inline Vec occupancy(const GridPolicy& pi, const GridModel& model) {
    return occupancy(policy_marginals(pi, model).kernel, model.spec());
}

inline double objective(const ValueFn& v, const MdpSpec& spec) {
    double j = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) j += spec.rho0[s] * v[s];
    return j;
}

/// Negative entropy int pi log pi of one grid state.
inline double negative_entropy(const LogDensityGrid& dens) {
    auto w = dens.grid->weights();
    double acc = 0.0;
    for (std::size_t p = 0; p < w.size(); ++p) {
        double mass = dens.density(p) * w[p];
        if (mass != 0.0) acc += mass * std::max(dens.log_values[p], kLogUnderflow);
    }
    return acc;
}

struct PerformanceDifference {
    double lhs = 0.0; // J(pi') - J(pi) from solved values
    double rhs = 0.0; // occupancy-weighted advantage form
};

inline PerformanceDifference performance_difference(const GridPolicy& pi, const GridPolicy& pi_prime,
                                                    const GridModel& model) {
    const MdpSpec& spec = model.spec();
    const std::size_t m = model.num_states(), np = model.num_points();
    const double tau = spec.tau;
    ValueFn v = policy_value(pi, model);
    ValueFn v_prime = policy_value(pi_prime, model);
    PerformanceDifference out;
    out.lhs = objective(v_prime, spec) - objective(v, spec);

    Vec d_prime = occupancy(pi_prime, model);
    auto w = model.grid().weights();
    double acc = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
        double adv = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double diff = pi_prime[s].density(p) - pi[s].density(p);
            if (diff != 0.0) adv += w[p] * model.q(v, s, p) * diff;
        }
        adv += -tau * negative_entropy(pi_prime[s]) + tau * negative_entropy(pi[s]);
        acc += d_prime[s] * adv;
    }
    out.rhs = acc / (1.0 - spec.gamma);
    return out;
}

} // namespace wpglab

#endif
