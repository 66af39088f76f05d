#ifndef WPGLAB_MODEL_HPP
#define WPGLAB_MODEL_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wpglab/core.hpp"
#include "wpglab/quadrature.hpp"

namespace wpglab {

using RewardFn = std::function<double(std::size_t s, std::span<const double> a)>;
/// Writes the d-vector gradient into `out`.
using RewardGradFn = std::function<void(std::size_t s, std::span<const double> a, std::span<double> out)>;
/// Writes p(.|s,a) (length m) into `out`.
using TransProbFn = std::function<void(std::size_t s, std::span<const double> a, std::span<double> out)>;
/// Writes the m x d array d p(s'|s,a) / d a, row-major by s', into `out`.
using TransGradFn = std::function<void(std::size_t s, std::span<const double> a, std::span<double> out)>;

/// Entropy-regularized discounted MDP over a finite state set with actions in R^d.
/// Plain aggregate: invariants are checked by validate(), not on construction.
struct MdpSpec {
    std::vector<std::string> states;
    int action_dim = 1;
    double gamma = 0.5;
    double tau = 1.0;
    double beta = 1.0;
    Vec rho0;
    RewardFn reward;
    RewardGradFn reward_grad;
    TransProbFn trans_prob;
    TransGradFn trans_prob_grad;

    std::size_t num_states() const { return states.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(action_dim); }

    /// r(s,a) - (beta/2)|a|^2
    double penalized_reward(std::size_t s, std::span<const double> a) const {
        return reward(s, a) - 0.5 * beta * squared_norm(a);
    }
};

struct RegularityProfile {
    double r_max = 0.0;
    double g_r = 0.0;
    double l_r = 0.0;
    double g_p = 0.0;
    double l_p = 0.0;
    double k0 = 0.0;
    double m0 = 0.0;
};

/// The Gaussian reference rho_beta(a) = exp(-beta |a|^2 / (2 tau)) / Z_beta.
struct GaussianReference {
    double beta = 1.0;
    double tau = 1.0;
    int d = 1;
    double log_z_beta = 0.0;

    GaussianReference() = default;
    GaussianReference(double beta_, double tau_, int d_)
        : beta(beta_), tau(tau_), d(d_), log_z_beta(0.5 * d_ * std::log(2.0 * kPi * tau_ / beta_)) {}

    double variance() const { return tau / beta; }
    double log_density(std::span<const double> a) const { return -beta * squared_norm(a) / (2.0 * tau) - log_z_beta; }
    void score(std::span<const double> a, std::span<double> out) const {
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = -beta * a[k] / tau;
    }
};

inline GaussianReference reference_of(const MdpSpec& spec) { return {spec.beta, spec.tau, spec.action_dim}; }

/// Per-state diagonal Gaussian initial policy.
struct GaussianInit {
    std::vector<Vec> mean; // m x d
    std::vector<Vec> var;  // m x d
};

inline GaussianInit uniform_gaussian_init(std::size_t m, int d, double mean, double var) {
    return {std::vector<Vec>(m, Vec(d, mean)), std::vector<Vec>(m, Vec(d, var))};
}

/// KL(N(mean, diag var) || rho_beta) in closed form.
inline double gaussian_kl_to_reference(std::span<const double> mean, std::span<const double> var,
                                       const GaussianReference& ref) {
    double s2 = ref.variance();
    double kl = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
        if (!(var[k] > 0.0)) throw std::invalid_argument("gaussian init: variance must be > 0");
        double ratio = var[k] / s2;
        kl += 0.5 * (ratio + mean[k] * mean[k] / s2 - 1.0 - std::log(ratio));
    }
    return kl;
}

struct InitConstants {
    double k0 = 0.0;
    double m0 = 0.0;
};

inline InitConstants gaussian_init_constants(const MdpSpec& spec, const GaussianInit& init) {
    if (init.mean.size() != spec.num_states() || init.var.size() != spec.num_states())
        throw std::invalid_argument("gaussian init: need one mean/var per state");
    GaussianReference ref = reference_of(spec);
    InitConstants out;
    for (std::size_t s = 0; s < spec.num_states(); ++s) {
        if (init.mean[s].size() != spec.dim() || init.var[s].size() != spec.dim())
            throw std::invalid_argument("gaussian init: mean/var must have action_dim entries");
        out.k0 = std::max(out.k0, gaussian_kl_to_reference(init.mean[s], init.var[s], ref));
        double m = 0.0;
        for (std::size_t k = 0; k < spec.dim(); ++k) m += init.mean[s][k] * init.mean[s][k] + init.var[s][k];
        out.m0 = std::max(out.m0, m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark families

enum class BenchmarkFamily { single_state_quadratic, logit_chain };

inline BenchmarkFamily parse_family(const std::string& name) {
    if (name == "single_state_quadratic") return BenchmarkFamily::single_state_quadratic;
    if (name == "logit_chain") return BenchmarkFamily::logit_chain;
    throw std::invalid_argument("unknown benchmark family '" + name + "'");
}

inline std::string family_name(BenchmarkFamily f) {
    return f == BenchmarkFamily::single_state_quadratic ? "single_state_quadratic" : "logit_chain";
}

namespace detail {

using nlohmann::json;

inline double require_number(const json& p, const char* key) {
    if (!p.contains(key)) throw std::invalid_argument(std::string("missing parameter '") + key + "'");
    if (!p[key].is_number()) throw std::invalid_argument(std::string("parameter '") + key + "' must be a number");
    double v = p[key].get<double>();
    if (!std::isfinite(v)) throw std::invalid_argument(std::string("parameter '") + key + "' must be finite");
    return v;
}

inline Vec require_vector(const json& p, const char* key, std::size_t n) {
    if (!p.contains(key)) throw std::invalid_argument(std::string("missing parameter '") + key + "'");
    const json& v = p[key];
    if (!v.is_array() || v.size() != n)
        throw std::invalid_argument(std::string("parameter '") + key + "' must be a list of " + std::to_string(n) +
                                    " numbers");
    Vec out;
    for (const auto& x : v) {
        if (!x.is_number()) throw std::invalid_argument(std::string("parameter '") + key + "' must hold numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::vector<Vec> require_matrix(const json& p, const char* key, std::size_t rows, std::size_t cols) {
    if (!p.contains(key)) throw std::invalid_argument(std::string("missing parameter '") + key + "'");
    const json& v = p[key];
    auto bad = [&] {
        return std::invalid_argument(std::string("parameter '") + key + "' must be a " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + " matrix");
    };
    if (!v.is_array() || v.size() != rows) throw bad();
    std::vector<Vec> out;
    for (const auto& row : v) {
        if (!row.is_array() || row.size() != cols) throw bad();
        Vec r;
        for (const auto& x : row) {
            if (!x.is_number()) throw bad();
            r.push_back(x.get<double>());
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void check_common(double gamma, double tau, double beta, int d) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("parameter 'gamma' must lie in (0,1)");
    if (!(tau > 0.0)) throw std::invalid_argument("parameter 'tau' must be > 0");
    if (!(beta > 0.0)) throw std::invalid_argument("parameter 'beta' must be > 0");
    if (d < 1 || d > 3) throw std::invalid_argument("parameter 'd' must be 1, 2 or 3");
}

inline int read_dim(const json& p) {
    if (!p.contains("d")) return 1;
    if (!p["d"].is_number_integer()) throw std::invalid_argument("parameter 'd' must be an integer");
    return p["d"].get<int>();
}

inline void reject_unknown(const json& p, std::initializer_list<const char*> allowed) {
    for (auto it = p.begin(); it != p.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw std::invalid_argument("unknown parameter '" + it.key() + "'");
    }
}

inline MdpSpec make_single_state_quadratic(const json& p) {
    reject_unknown(p, {"r0", "gamma", "tau", "beta", "d"});
    double r0 = require_number(p, "r0");
    double gamma = require_number(p, "gamma");
    double tau = require_number(p, "tau");
    double beta = require_number(p, "beta");
    int d = read_dim(p);
    check_common(gamma, tau, beta, d);

    MdpSpec spec;
    spec.states = {"s0"};
    spec.action_dim = d;
    spec.gamma = gamma;
    spec.tau = tau;
    spec.beta = beta;
    spec.rho0 = {1.0};
    spec.reward = [r0](std::size_t, std::span<const double>) { return r0; };
    spec.reward_grad = [](std::size_t, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    spec.trans_prob = [](std::size_t, std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    spec.trans_prob_grad = [](std::size_t, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    return spec;
}

struct LogitChainParams {
    std::size_t m = 2;
    int d = 1;
    Vec c;
    std::vector<Vec> w; // m x d
    std::vector<Vec> u, v;
};

inline MdpSpec make_logit_chain(const json& p) {
    reject_unknown(p, {"m", "c", "w", "u", "v", "gamma", "tau", "beta", "d", "rho0"});
    if (!p.contains("m") || !p["m"].is_number_integer()) throw std::invalid_argument("missing integer parameter 'm'");
    int m_int = p["m"].get<int>();
    if (m_int < 2) throw std::invalid_argument("parameter 'm' must be >= 2 for logit_chain");
    auto m = static_cast<std::size_t>(m_int);
    double gamma = require_number(p, "gamma");
    double tau = require_number(p, "tau");
    double beta = require_number(p, "beta");
    int d = read_dim(p);
    check_common(gamma, tau, beta, d);

    auto prm = std::make_shared<LogitChainParams>();
    prm->m = m;
    prm->d = d;
    prm->c = require_vector(p, "c", m);
    if (!p.contains("w") || !p["w"].is_array() || p["w"].size() != m)
        throw std::invalid_argument("parameter 'w' must be a list of " + std::to_string(m) + " entries");
    for (const auto& ws : p["w"]) {
        // A scalar entry applies the same weight to every action component.
        if (ws.is_number()) {
            prm->w.push_back(Vec(d, ws.get<double>()));
        } else if (ws.is_array() && ws.size() == static_cast<std::size_t>(d)) {
            Vec row;
            for (const auto& x : ws) {
                if (!x.is_number()) throw std::invalid_argument("parameter 'w' must hold numbers");
                row.push_back(x.get<double>());
            }
            prm->w.push_back(std::move(row));
        } else {
            throw std::invalid_argument("parameter 'w' entries must be numbers or d-vectors");
        }
    }
    prm->u = require_matrix(p, "u", m, m);
    prm->v = require_matrix(p, "v", m, m);

    MdpSpec spec;
    for (std::size_t s = 0; s < m; ++s) spec.states.push_back("s" + std::to_string(s));
    spec.action_dim = d;
    spec.gamma = gamma;
    spec.tau = tau;
    spec.beta = beta;
    spec.rho0 = p.contains("rho0") ? require_vector(p, "rho0", m) : Vec(m, 1.0 / m);

    spec.reward = [prm](std::size_t s, std::span<const double> a) {
        double z = 0.0;
        for (int k = 0; k < prm->d; ++k) z += prm->w[s][k] * a[k];
        return prm->c[s] * std::tanh(z);
    };
    spec.reward_grad = [prm](std::size_t s, std::span<const double> a, std::span<double> out) {
        double z = 0.0;
        for (int k = 0; k < prm->d; ++k) z += prm->w[s][k] * a[k];
        double t = std::tanh(z);
        double scale = prm->c[s] * (1.0 - t * t);
        for (int k = 0; k < prm->d; ++k) out[k] = scale * prm->w[s][k];
    };
    // p(s'|s,a) = softmax_{s'}(u[s][s'] + v[s][s'] tanh(a_1)), computed with a max shift.
    spec.trans_prob = [prm](std::size_t s, std::span<const double> a, std::span<double> out) {
        double t = std::tanh(a[0]);
        double mx = -kInf;
        for (std::size_t j = 0; j < prm->m; ++j) {
            out[j] = prm->u[s][j] + prm->v[s][j] * t;
            mx = std::max(mx, out[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < prm->m; ++j) {
            out[j] = std::exp(out[j] - mx);
            z += out[j];
        }
        for (std::size_t j = 0; j < prm->m; ++j) out[j] /= z;
    };
    spec.trans_prob_grad = [prm](std::size_t s, std::span<const double> a, std::span<double> out) {
        double t = std::tanh(a[0]);
        std::vector<double> prob(prm->m);
        double mx = -kInf;
        for (std::size_t j = 0; j < prm->m; ++j) {
            prob[j] = prm->u[s][j] + prm->v[s][j] * t;
            mx = std::max(mx, prob[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < prm->m; ++j) {
            prob[j] = std::exp(prob[j] - mx);
            z += prob[j];
        }
        double vbar = 0.0;
        for (std::size_t j = 0; j < prm->m; ++j) {
            prob[j] /= z;
            vbar += prob[j] * prm->v[s][j];
        }
        double dt = 1.0 - t * t;
        const std::size_t d = static_cast<std::size_t>(prm->d);
        for (std::size_t j = 0; j < prm->m; ++j) {
            out[j * d] = prob[j] * (prm->v[s][j] - vbar) * dt;
            for (std::size_t k = 1; k < d; ++k) out[j * d + k] = 0.0;
        }
    };
    return spec;
}

} // namespace detail

/// Builds one of the engineered benchmark MDPs. Throws std::invalid_argument
/// for an unknown family or missing/invalid parameters.
inline MdpSpec make_benchmark(BenchmarkFamily family, const nlohmann::json& params) {
    if (!params.is_object()) throw std::invalid_argument("benchmark params must be a key-value object");
    switch (family) {
    case BenchmarkFamily::single_state_quadratic:
        return detail::make_single_state_quadratic(params);
    case BenchmarkFamily::logit_chain:
        return detail::make_logit_chain(params);
    }
    throw std::invalid_argument("unknown benchmark family");
}

inline MdpSpec make_benchmark(const std::string& family, const nlohmann::json& params) {
    return make_benchmark(parse_family(family), params);
}

// ---------------------------------------------------------------------------
// Regularity measurement

namespace detail {

struct PointEval {
    double r = 0.0;
    Vec grad_r; // d
    Vec grad_p; // m x d
};

inline PointEval eval_point(const MdpSpec& spec, std::size_t s, std::span<const double> a) {
    const std::size_t d = spec.dim(), m = spec.num_states();
    PointEval e;
    e.grad_r.assign(d, 0.0);
    e.grad_p.assign(m * d, 0.0);
    e.r = spec.reward(s, a);
    spec.reward_grad(s, a, e.grad_r);
    spec.trans_prob_grad(s, a, e.grad_p);
    auto finite = [](std::span<const double> v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    if (!std::isfinite(e.r) || !finite(e.grad_r) || !finite(e.grad_p)) {
        std::ostringstream os;
        os << "non-finite model output at state " << s << ", action (";
        for (std::size_t k = 0; k < d; ++k) os << (k ? ", " : "") << a[k];
        os << ")";
        throw NumericalError(os.str());
    }
    return e;
}

inline double grad_p_sum(const Vec& gp, std::size_t m, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::sqrt(squared_norm(std::span(gp).subspan(j * d, d)));
    return s;
}

} // namespace detail

/// Measures the action-regularity constants as grid maxima. Lipschitz constants
/// are the largest difference quotients between axis-adjacent nodes. k0 and m0
/// come from the Gaussian initial policy when one is supplied.
inline RegularityProfile estimate_regularity(const MdpSpec& spec, const ActionGrid& grid,
                                             const std::optional<GaussianInit>& init = std::nullopt) {
    const std::size_t m = spec.num_states(), d = spec.dim();
    if (static_cast<int>(d) != grid.dim()) throw std::invalid_argument("estimate_regularity: grid dimension mismatch");
    RegularityProfile prof;
    std::vector<detail::PointEval> evals(grid.size());
    std::array<int, 3> idx{};
    for (std::size_t s = 0; s < m; ++s) {
        for (std::size_t p = 0; p < grid.size(); ++p) {
            evals[p] = detail::eval_point(spec, s, grid.point(p));
            prof.r_max = std::max(prof.r_max, std::abs(evals[p].r));
            prof.g_r = std::max(prof.g_r, std::sqrt(squared_norm(evals[p].grad_r)));
            prof.g_p = std::max(prof.g_p, detail::grad_p_sum(evals[p].grad_p, m, d));
        }
        const double h = grid.spacing();
        for (std::size_t p = 0; p < grid.size(); ++p) {
            grid.unflatten(p, idx);
            for (std::size_t k = 0; k < d; ++k) {
                if (idx[k] + 1 >= grid.points_per_dim()) continue;
                auto next = idx;
                ++next[k];
                std::size_t q = grid.flatten(next);
                double dr = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    double x = evals[q].grad_r[c] - evals[p].grad_r[c];
                    dr += x * x;
                }
                prof.l_r = std::max(prof.l_r, std::sqrt(dr) / h);
                double dp = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    double x = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        double y = evals[q].grad_p[j * d + c] - evals[p].grad_p[j * d + c];
                        x += y * y;
                    }
                    dp += std::sqrt(x);
                }
                prof.l_p = std::max(prof.l_p, dp / h);
            }
        }
    }
    if (init) {
        auto ic = gaussian_init_constants(spec, *init);
        prof.k0 = ic.k0;
        prof.m0 = ic.m0;
    }
    return prof;
}

struct Finding {
    std::string message;
    std::optional<std::size_t> state;
    std::optional<Vec> action;
};

/// Checks every MdpSpec invariant on every grid node. Returns one finding per violation.
inline std::vector<Finding> validate(const MdpSpec& spec, const ActionGrid& grid) {
    std::vector<Finding> out;
    auto fmt = [](double x) {
        std::ostringstream os;
        os.precision(12);
        os << x;
        return os.str();
    };
    if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) out.push_back({"gamma " + fmt(spec.gamma) + " outside (0,1)", {}, {}});
    if (!(spec.tau > 0.0)) out.push_back({"tau " + fmt(spec.tau) + " not positive", {}, {}});
    if (!(spec.beta > 0.0)) out.push_back({"beta " + fmt(spec.beta) + " not positive", {}, {}});
    const std::size_t m = spec.num_states(), d = spec.dim();
    if (m == 0) {
        out.push_back({"empty state set", {}, {}});
        return out;
    }
    if (spec.action_dim != grid.dim()) {
        out.push_back({"action_dim " + std::to_string(spec.action_dim) + " does not match grid dimension " +
                           std::to_string(grid.dim()),
                       {}, {}});
        return out;
    }
    if (spec.rho0.size() != m) {
        out.push_back({"rho0 has " + std::to_string(spec.rho0.size()) + " entries, expected " + std::to_string(m), {}, {}});
    } else {
        double sum = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
            sum += spec.rho0[s];
            if (!(spec.rho0[s] > 0.0)) out.push_back({"rho0 entry not positive", s, {}});
        }
        if (std::abs(sum - 1.0) > 1e-12) out.push_back({"rho0 not normalized (sum " + fmt(sum) + ")", {}, {}});
    }
    if (!spec.reward || !spec.reward_grad || !spec.trans_prob || !spec.trans_prob_grad) {
        out.push_back({"missing model callable", {}, {}});
        return out;
    }

    Vec prob(m), grad(m * d), grad_r(d);
    for (std::size_t s = 0; s < m; ++s) {
        for (std::size_t p = 0; p < grid.size(); ++p) {
            auto a = grid.point(p);
            auto where = [&] {
                std::ostringstream os;
                os << " at (s=" << s << ", a=(";
                for (std::size_t k = 0; k < d; ++k) os << (k ? ", " : "") << a[k];
                os << "))";
                return os.str();
            };
            Vec act(a.begin(), a.end());
            double r = spec.reward(s, a);
            if (!std::isfinite(r)) out.push_back({"non-finite reward" + where(), s, act});
            spec.reward_grad(s, a, grad_r);
            for (double g : grad_r)
                if (!std::isfinite(g)) {
                    out.push_back({"non-finite reward gradient" + where(), s, act});
                    break;
                }
            spec.trans_prob(s, a, prob);
            double mass = 0.0;
            bool negative = false;
            for (double x : prob) {
                mass += x;
                negative = negative || x < 0.0 || !std::isfinite(x);
            }
            if (negative) out.push_back({"kernel row has negative or non-finite entries" + where(), s, act});
            if (!(std::abs(mass - 1.0) <= 1e-10)) out.push_back({"kernel row mass " + fmt(mass) + where(), s, act});
            spec.trans_prob_grad(s, a, grad);
            for (std::size_t k = 0; k < d; ++k) {
                double col = 0.0;
                for (std::size_t j = 0; j < m; ++j) col += grad[j * d + k];
                if (!(std::abs(col) <= 1e-8)) {
                    out.push_back({"kernel gradient column " + std::to_string(k) + " sums to " + fmt(col) + where(), s, act});
                    break;
                }
            }
        }
    }
    return out;
}

} // namespace wpglab

#endif
