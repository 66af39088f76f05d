#ifndef WPGLAB_CONSTANTS_HPP
#define WPGLAB_CONSTANTS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "wpglab/core.hpp"
#include "wpglab/model.hpp"

namespace wpglab {

/// LSI constant of a Gibbs density after Holley-Stroock:
/// (beta/tau) exp(-2 (r_max + gamma v_max) / tau).
inline double lsi_constant(double beta, double tau, double r_max, double gamma, double v_max) {
    return beta / tau * std::exp(-2.0 * (r_max + gamma * v_max) / tau);
}

/// One-step KL discretization error (L_b^2 d / 2) eta^2 + (L_b^2 B^2 / (6 tau)) eta^3.
inline double delta_eta(double l_b, double b_sq, int d, double tau, double eta) {
    double l2 = l_b * l_b;
    return 0.5 * l2 * d * eta * eta + l2 * b_sq / (6.0 * tau) * eta * eta * eta;
}

/// Stationary second-moment ceiling (2/beta)(G^2/beta + 2 tau d) + (4 G^2 / beta) eta.
inline double moment_ceiling(double g, double beta, double tau, int d, double eta) {
    return 2.0 / beta * (g * g / beta + 2.0 * tau * d) + 4.0 * g * g / beta * eta;
}

/// Names and values of the four terms whose minimum is eta0.
struct StepCeilingTerms {
    std::array<double, 4> values;
    static constexpr std::array<const char*, 4> names{"1", "1/(4β)", "1/(ᾱτ)", "ᾱ(1−γ)²/(2C_δ)"};

    double min() const { return *std::min_element(values.begin(), values.end()); }
    const char* binding() const {
        return names[static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin())];
    }
};

inline StepCeilingTerms step_ceiling_terms(double beta, double alpha, double tau, double gamma, double c_delta) {
    return {{1.0, 1.0 / (4.0 * beta), 1.0 / (alpha * tau), alpha * (1.0 - gamma) * (1.0 - gamma) / (2.0 * c_delta)}};
}

inline double feasible_step_ceiling(double beta, double alpha, double tau, double gamma, double c_delta) {
    return step_ceiling_terms(beta, alpha, tau, gamma, c_delta).min();
}

/// Every explicit constant of the discrete-time analysis, evaluated at one step size.
struct ConstantsReport {
    // inputs
    double gamma = 0, tau = 0, beta = 0;
    int d = 1;
    double eta = 0;
    double log_z_beta = 0;
    RegularityProfile profile;

    double u_bound = 0, l_star = 0, e0_bar = 0, v_bar = 0;
    double lb_bar = 0, g_bar = 0, alpha_bar = 0;
    double c_eta = 0, kappa_eta = 0;
    double m_inf_eta = 0, b_sq = 0;
    double m_bar = 0, b_bar_sq = 0;
    double delta_eta = 0;
    double k_eta_bar = 0, h_eta_bar = 0;
    double c_delta = 0, eta0 = 0;
    double ct_rate = 0; // continuous-time reference rate, not simulated

    /// True when the -(d/2) log(4 pi e tau eta) term sets k_eta_bar.
    bool k_eta_log_term_dominates = false;

    std::string eta0_binding() const {
        return step_ceiling_terms(beta, alpha_bar, tau, gamma, c_delta).binding();
    }
};

namespace detail {

inline void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw NumericalError(std::string("constants: non-finite ") + what);
}

} // namespace detail

/// Evaluates the report. Without eta the feasible ceiling eta0 is used.
inline ConstantsReport compute_report(const RegularityProfile& prof, double gamma, double tau, double beta, int d,
                                      std::optional<double> eta = std::nullopt) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("compute_report: gamma must lie in (0,1)");
    if (!(tau > 0.0) || !(beta > 0.0)) throw std::invalid_argument("compute_report: tau and beta must be > 0");
    if (d < 1) throw std::invalid_argument("compute_report: d must be positive");
    for (double x : {prof.r_max, prof.g_r, prof.l_r, prof.g_p, prof.l_p, prof.k0, prof.m0})
        if (!std::isfinite(x) || x < 0.0) throw std::invalid_argument("compute_report: profile entries must be finite and >= 0");
    if (eta && !(*eta > 0.0)) throw std::invalid_argument("compute_report: eta must be > 0");

    ConstantsReport r;
    r.gamma = gamma;
    r.tau = tau;
    r.beta = beta;
    r.d = d;
    r.profile = prof;
    r.log_z_beta = 0.5 * d * std::log(2.0 * kPi * tau / beta);
    const double one_m = 1.0 - gamma;

    r.u_bound = (prof.r_max + tau * r.log_z_beta) / one_m;
    r.l_star = (-prof.r_max + tau * r.log_z_beta) / one_m;
    r.e0_bar = (2.0 * prof.r_max + tau * prof.k0) / one_m;
    r.v_bar = std::max({1.0, r.u_bound, r.e0_bar - r.l_star + 1.0});

    r.lb_bar = beta + prof.l_r + gamma * prof.l_p * r.v_bar;
    r.g_bar = prof.g_r + gamma * prof.g_p * r.v_bar;
    r.alpha_bar = lsi_constant(beta, tau, prof.r_max, gamma, r.v_bar);

    r.m_bar = std::max(prof.m0, 3.0 * r.g_bar * r.g_bar / (beta * beta) + 4.0 * tau * d / beta);
    r.b_bar_sq = 2.0 * beta * beta * r.m_bar + 2.0 * r.g_bar * r.g_bar;
    r.c_delta = 0.5 * r.lb_bar * r.lb_bar * d + r.lb_bar * r.lb_bar * r.b_bar_sq / (6.0 * tau);
    r.eta0 = feasible_step_ceiling(beta, r.alpha_bar, tau, gamma, r.c_delta);
    r.ct_rate = 2.0 * r.alpha_bar * tau * one_m;

    r.eta = eta.value_or(r.eta0);
    r.c_eta = -std::expm1(-r.alpha_bar * tau * r.eta);
    r.kappa_eta = 1.0 - one_m * r.c_eta;
    r.m_inf_eta = moment_ceiling(r.g_bar, beta, tau, d, r.eta);
    const double m_inf = std::max(prof.m0, r.m_inf_eta);
    r.b_sq = 2.0 * beta * beta * m_inf + 2.0 * r.g_bar * r.g_bar;
    r.delta_eta = delta_eta(r.lb_bar, r.b_sq, d, tau, r.eta);
    const double smoothing =
        beta * m_inf / (2.0 * tau) + r.log_z_beta - 0.5 * d * std::log(4.0 * kPi * std::exp(1.0) * tau * r.eta);
    r.k_eta_bar = std::max({prof.k0, 0.0, smoothing});
    r.k_eta_log_term_dominates = smoothing > prof.k0 && smoothing > 0.0;
    r.h_eta_bar = r.k_eta_bar + 2.0 * (prof.r_max + gamma * r.v_bar) / tau;

    for (auto [x, name] : {std::pair{r.u_bound, "u_bound"}, {r.l_star, "l_star"}, {r.v_bar, "v_bar"},
                           {r.lb_bar, "lb_bar"}, {r.g_bar, "g_bar"}, {r.alpha_bar, "alpha_bar"}, {r.c_delta, "c_delta"},
                           {r.eta0, "eta0"}, {r.delta_eta, "delta_eta"}, {r.k_eta_bar, "k_eta_bar"},
                           {r.h_eta_bar, "h_eta_bar"}, {r.b_sq, "b_sq"}})
        detail::require_finite(x, name);
    if (!(r.alpha_bar > 0.0)) throw NumericalError("constants: alpha_bar underflowed to zero");
    return r;
}

/// Same profile and model constants, re-evaluated at another step size.
inline ConstantsReport at_eta(const ConstantsReport& r, double eta) {
    return compute_report(r.profile, r.gamma, r.tau, r.beta, r.d, eta);
}

/// Feasibility of a step size against the three stability conditions.
struct StepsizeCertificate {
    double eta = 0;
    bool penalty_ok = false;  // eta <= 1/(4 beta)
    bool lsi_ok = false;      // alpha_bar tau eta <= 1
    bool bias_ok = false;     // tau delta_eta / ((1-gamma)^2 c_eta) <= 1
    bool below_eta0 = false;  // eta <= eta0
    double bias_ratio = 0;
    std::string binding;

    bool feasible() const { return penalty_ok && lsi_ok && bias_ok; }
};

inline StepsizeCertificate check_stepsize(const ConstantsReport& report, double eta) {
    ConstantsReport r = report.eta == eta ? report : at_eta(report, eta);
    StepsizeCertificate c;
    c.eta = eta;
    c.penalty_ok = eta > 0.0 && eta <= 1.0 / (4.0 * r.beta);
    c.lsi_ok = r.alpha_bar * r.tau * eta <= 1.0;
    double one_m = 1.0 - r.gamma;
    c.bias_ratio = r.tau / (one_m * one_m) * r.delta_eta / r.c_eta;
    c.bias_ok = c.bias_ratio <= 1.0;
    c.below_eta0 = eta <= r.eta0;
    if (!c.penalty_ok)
        c.binding = "1/(4β)";
    else if (!c.lsi_ok)
        c.binding = "1/(ᾱτ)";
    else if (!c.bias_ok)
        c.binding = "τδ̄_η/((1−γ)²c_η) ≤ 1";
    else
        c.binding = r.eta0_binding();
    return c;
}

/// Limit of the envelope as k grows: 2 C_delta eta / (alpha (1-gamma)^2).
inline double envelope_bias(const ConstantsReport& r, double eta) {
    double one_m = 1.0 - r.gamma;
    return 2.0 * r.c_delta * eta / (r.alpha_bar * one_m * one_m);
}

/// exp(-alpha tau (1-gamma) eta k / 2) e0 + 2 C_delta eta / (alpha (1-gamma)^2)
inline double envelope(const ConstantsReport& r, double e0, double eta, long long k) {
    double one_m = 1.0 - r.gamma;
    double rate = 0.5 * r.alpha_bar * r.tau * one_m * eta;
    return std::exp(-rate * static_cast<double>(k)) * e0 + envelope_bias(r, eta);
}


inline nlohmann::json to_json(const ConstantsReport& r) {
    nlohmann::json j;
    j["u_bound"] = r.u_bound;
    j["l_star"] = r.l_star;
    j["e0_bar"] = r.e0_bar;
    j["v_bar"] = r.v_bar;
    j["lb_bar"] = r.lb_bar;
    j["g_bar"] = r.g_bar;
    j["alpha_bar"] = r.alpha_bar;
    j["c_eta"] = r.c_eta;
    j["kappa_eta"] = r.kappa_eta;
    j["m_inf_eta"] = r.m_inf_eta;
    j["b_sq"] = r.b_sq;
    j["m_bar"] = r.m_bar;
    j["b_bar_sq"] = r.b_bar_sq;
    j["delta_eta"] = r.delta_eta;
    j["k_eta_bar"] = r.k_eta_bar;
    j["h_eta_bar"] = r.h_eta_bar;
    j["c_delta"] = r.c_delta;
    j["eta0"] = r.eta0;
    j["ct_rate"] = r.ct_rate;
    j["ct_rate_note"] = "reference only: continuous-time rate, not simulated";
    j["eta"] = r.eta;
    j["eta0_binding"] = r.eta0_binding();
    j["k_eta_log_term_dominates"] = r.k_eta_log_term_dominates;
    j["log_z_beta"] = r.log_z_beta;
    j["profile"] = {{"r_max", r.profile.r_max}, {"g_r", r.profile.g_r}, {"l_r", r.profile.l_r}, {"g_p", r.profile.g_p},
                    {"l_p", r.profile.l_p},     {"k0", r.profile.k0},   {"m0", r.profile.m0}};
    return j;
}

} // namespace wpglab

#endif
