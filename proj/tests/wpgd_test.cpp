#include <gtest/gtest.h>

#include <cmath>
#include <mutex>
#include <set>

#include "test_support.hpp"

using namespace wpglab;
using wpglab::test::chain;
using wpglab::test::gaussian_kl_1d;
using wpglab::test::grid_for;
using wpglab::test::quadratic;

namespace {

/// Mean and variance of every particle of state 0.
std::pair<double, double> particle_moments(const ParticleEnsemble& ens) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < ens.n; ++i) {
        double a = ens.particle(0, i)[0];
        s1 += a;
        s2 += a * a;
    }
    double mean = s1 / ens.n;
    return {mean, s2 / ens.n - mean * mean};
}

std::pair<double, double> grid_moments(const GridPolicy& pi) {
    Vec x = tabulate(pi.grid(), [](std::span<const double> a) { return a[0]; });
    double mean = expectation(x, pi[0]);
    return {mean, second_moment(pi, 0) - mean * mean};
}

/// V^pi of N(m, s2) on the zero-reward quadratic family.
double gaussian_policy_value(double m, double s2, double gamma, double tau, double beta) {
    return (-0.5 * beta * (m * m + s2) + 0.5 * tau * (1.0 + std::log(2.0 * kPi * s2))) / (1.0 - gamma);
}

ConstantsReport report_for(const MdpSpec& spec, GridPtr g, const GaussianInit& init, std::optional<double> eta) {
    return compute_report(estimate_regularity(spec, *g, init), spec.gamma, spec.tau, spec.beta, spec.action_dim, eta);
}

DriftFn linear_drift(double beta) {
    return [beta](std::size_t, std::span<const double> a, std::span<double> out) { out[0] = -beta * a[0]; };
}

} // namespace

TEST(LangevinStep, DeterministicEulerWithZeroNoise) {
    MdpSpec spec = quadratic();
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 0.0, 1.0), 2, 0);
    ens.positions[0] = {1.0, -2.0};
    LangevinOptions opt;
    opt.noise = [](std::size_t, std::span<double> xi) { std::fill(xi.begin(), xi.end(), 0.0); };
    QEval q(std::make_shared<const ValueFn>(1, 0.0), spec);
    ParticleEnsemble next = langevin_step(ens, q, 0.1, 1, opt).next;
    EXPECT_DOUBLE_EQ(next.positions[0][0], 0.9);
    EXPECT_DOUBLE_EQ(next.positions[0][1], -1.8);
    ASSERT_TRUE(next.has_mixture());
    EXPECT_DOUBLE_EQ(next.mixtures[0]->variance(), 0.2);
    EXPECT_EQ(next.step, 1u);
}

TEST(LangevinStep, GaussianRecursionWithParticles) {
    const double beta = 1.0, tau = 1.0, eta = 0.1;
    const std::size_t n = 40000;
    MdpSpec spec = quadratic(0.0, 0.5, tau, beta);
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 2.0, 0.5), n, 17);
    QEval q(std::make_shared<const ValueFn>(1, 0.0), spec);
    double m = 2.0, v = 0.5;
    for (int k = 0; k < 10; ++k) {
        ens = langevin_step(ens, q, eta, 17).next;
        m *= 1.0 - beta * eta;
        v = (1.0 - beta * eta) * (1.0 - beta * eta) * v + 2.0 * tau * eta;
        auto [pm, pv] = particle_moments(ens);
        EXPECT_LE(std::abs(pm - m), 4.0 / std::sqrt(double(n)) * std::abs(m)) << "k=" << k;
        EXPECT_LE(std::abs(pv - v), 4.0 / std::sqrt(double(n)) * v) << "k=" << k;
    }
}

TEST(GridOracleStep, GaussianRecursionOnTheGrid) {
    const double beta = 1.5, tau = 0.7, eta = 0.08;
    MdpSpec spec = quadratic(0.0, 0.5, tau, beta);
    auto g = grid_for(spec);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 1.0, 0.3));
    GridDriftFn drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -beta * g->point(p)[0]; };
    double m = 1.0, v = 0.3;
    for (int k = 0; k < 20; ++k) {
        GridOracleResult r = grid_oracle_step(pi, drift, eta, tau);
        EXPECT_LE(r.mass_defect, 1e-6);
        pi = std::move(r.next);
        m *= 1.0 - beta * eta;
        v = (1.0 - beta * eta) * (1.0 - beta * eta) * v + 2.0 * tau * eta;
        auto [gm, gv] = grid_moments(pi);
        EXPECT_NEAR(gm, m, 1e-6) << "k=" << k;
        EXPECT_NEAR(gv, v, 1e-6) << "k=" << k;
    }
}

TEST(GridOracleStep, TwoDimensionalGaussianRecursion) {
    const double beta = 1.0, tau = 1.0, eta = 0.1;
    MdpSpec spec = quadratic(0.0, 0.5, tau, beta, 2);
    auto g = build_grid(2, 9.0, 181);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 2, 0.5, 0.6));
    GridDriftFn drift = [&](std::size_t, std::size_t p, std::span<double> out) {
        out[0] = -beta * g->point(p)[0];
        out[1] = -beta * g->point(p)[1];
    };
    pi = grid_oracle_step(pi, drift, eta, tau).next;
    double m = 0.5 * 0.9, v = 0.81 * 0.6 + 0.2;
    EXPECT_NEAR(second_moment(pi, 0), 2.0 * (m * m + v), 1e-6);
}

TEST(GridOracleStep, RefinementOrderOfHalfSteps) {
    MdpSpec spec = chain();
    GridModel model(spec, grid_for(spec));
    GridPolicy pi0 = init_gaussian_grid(spec, model.grid_ptr(), uniform_gaussian_init(2, 1, 0.3, 0.5));
    ValueFn v0 = policy_value(pi0, model);
    Vec log_eta, log_kl;
    for (double eta : {0.2, 0.1, 0.05}) {
        GridPolicy full = grid_oracle_step(pi0, model, v0, eta).next;
        GridPolicy half = grid_oracle_step(pi0, model, v0, 0.5 * eta).next;
        ValueFn v_half = policy_value(half, model); // drift refrozen at the intermediate policy
        GridPolicy two = grid_oracle_step(half, model, v_half, 0.5 * eta).next;
        double kl = 0.0;
        for (std::size_t s = 0; s < 2; ++s) kl = std::max(kl, grid_kl(two[s], full[s]));
        log_eta.push_back(std::log(eta));
        log_kl.push_back(std::log(kl));
    }
    const double mx = (log_eta[0] + log_eta[1] + log_eta[2]) / 3.0, my = (log_kl[0] + log_kl[1] + log_kl[2]) / 3.0;
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < 3; ++i) {
        sxy += (log_eta[i] - mx) * (log_kl[i] - my);
        sxx += (log_eta[i] - mx) * (log_eta[i] - mx);
    }
    EXPECT_GE(sxy / sxx, 1.8);
}

TEST(GridOracleStep, ReportsInadequateGrid) {
    MdpSpec spec = quadratic();
    auto narrow = build_grid(1, 2.0, 401);
    GridPolicy pi = init_gaussian_grid(spec, narrow, uniform_gaussian_init(1, 1, 0.0, 1.0));
    GridDriftFn drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -narrow->point(p)[0]; };
    try {
        grid_oracle_step(pi, drift, 0.1, 1.0);
        FAIL() << "expected a mass-defect error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("mass defect"), std::string::npos) << e.what();
    }
    auto coarse = build_grid(1, 8.0, 11);
    GridPolicy pc = init_gaussian_grid(spec, coarse, uniform_gaussian_init(1, 1, 0.0, 1.0));
    GridDriftFn zero = [](std::size_t, std::size_t, std::span<double> out) { out[0] = 0.0; };
    EXPECT_THROW(grid_oracle_step(pc, zero, 0.1, 1.0), NumericalError);
    EXPECT_THROW(grid_oracle_step(pc, zero, 0.0, 1.0), std::invalid_argument);
}

TEST(LangevinStep, AbortsOnEscapeAndNonFiniteDrift) {
    MdpSpec spec = quadratic();
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 0.0, 1.0), 100, 2);
    LangevinOptions opt;
    opt.escape_radius = 0.5;
    EXPECT_THROW(langevin_step(ens, linear_drift(1.0), 0.1, 1.0, 2, opt), NumericalError);
    DriftFn bad = [](std::size_t, std::span<const double>, std::span<double> out) { out[0] = kNaN; };
    EXPECT_THROW(langevin_step(ens, bad, 0.1, 1.0, 2), NumericalError);
    EXPECT_THROW(langevin_step(ens, linear_drift(1.0), -0.1, 1.0, 2), std::invalid_argument);
}

TEST(LangevinStep, DriftSnapshotIsSharedAcrossTheStep) {
    MdpSpec spec = chain();
    auto value = std::make_shared<const ValueFn>(Vec{0.5, -0.25});
    QEval q(value, spec);
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(2, 1, 0.0, 0.5), 500, 3);
    std::set<const ValueFn*> seen;
    std::mutex mu;
    DriftFn recording = [&](std::size_t s, std::span<const double> a, std::span<double> out) {
        {
            std::lock_guard<std::mutex> lock(mu);
            seen.insert(q.snapshot().get());
        }
        q.gradient(s, a, out);
    };
    ParticleEnsemble a = langevin_step(ens, recording, 0.1, spec.tau, 9).next;
    ParticleEnsemble b = langevin_step(ens, q, 0.1, 9).next;
    EXPECT_EQ(seen.size(), 1u);
    EXPECT_EQ(*seen.begin(), value.get());
    EXPECT_EQ(a.positions, b.positions);
}

TEST(LangevinStep, IndependentOfWorkerCount) {
    MdpSpec spec = chain();
    QEval q(std::make_shared<const ValueFn>(Vec{1.0, 2.0}), spec);
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(2, 1, 0.0, 0.5), 3000, 5);
    unsigned saved = worker_count();
    set_worker_count(1);
    ParticleEnsemble one = langevin_step(langevin_step(ens, q, 0.1, 5).next, q, 0.1, 5).next;
    set_worker_count(4);
    ParticleEnsemble four = langevin_step(langevin_step(ens, q, 0.1, 5).next, q, 0.1, 5).next;
    set_worker_count(saved);
    EXPECT_EQ(one.positions, four.positions);
    EXPECT_NE(one.positions[0], one.positions[1]);
}

TEST(FixedTarget, ContractionWithReportConstants) {
    const double eta = 0.1;
    MdpSpec spec = quadratic();
    auto g = grid_for(spec);
    GaussianInit init = uniform_gaussian_init(1, 1, 0.0, 0.5);
    ConstantsReport rep = report_for(spec, g, init, eta);
    GridPolicy target = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, 1.0));
    GridDriftFn drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -g->point(p)[0]; };
    Vec kl = fixed_target_run(init_gaussian_grid(spec, g, init), target, drift, eta, spec.tau, 200);
    const double factor = std::exp(-rep.alpha_bar * spec.tau * eta);
    double v = 0.5;
    for (std::size_t k = 0; k + 1 < kl.size(); ++k) {
        EXPECT_LE(kl[k + 1], factor * kl[k] + rep.delta_eta) << "k=" << k;
        EXPECT_NEAR(kl[k], gaussian_kl_1d(0.0, v, 1.0), 1e-9) << "k=" << k;
        v = 0.81 * v + 0.2;
    }
}

TEST(FixedTarget, StartingAtTheTargetStaysWithinTheBiasBall) {
    const double eta = 0.1;
    MdpSpec spec = quadratic();
    auto g = grid_for(spec);
    GaussianInit init = uniform_gaussian_init(1, 1, 0.0, 1.0);
    ConstantsReport rep = report_for(spec, g, init, eta);
    GridPolicy target = init_gaussian_grid(spec, g, init);
    GridDriftFn drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -g->point(p)[0]; };
    Vec kl = fixed_target_run(target, target, drift, eta, spec.tau, 100);
    const double ball = rep.delta_eta / -std::expm1(-rep.alpha_bar * spec.tau * eta);
    for (double x : kl) EXPECT_LE(x, ball + 1e-8);
}

TEST(FixedTarget, StationaryPlateauMatchesClosedForm) {
    const double eta = 0.1, beta = 1.0, tau = 1.0;
    MdpSpec spec = quadratic(0.0, 0.5, tau, beta);
    auto g = grid_for(spec);
    GridPolicy target = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, tau / beta));
    GridDriftFn drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -beta * g->point(p)[0]; };
    Vec kl = fixed_target_run(init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, 0.5)), target, drift, eta,
                              tau, 400);
    const double s2 = 2.0 * tau / (beta * (2.0 - beta * eta)); // stationary variance of the linear chain
    EXPECT_NEAR(s2, 1.052632, 1e-6);
    const double plateau = 0.5 * (s2 * beta / tau - 1.0 - std::log(s2 * beta / tau));
    EXPECT_NEAR(kl.back(), plateau, 1e-9);
}

TEST(FixedTarget, ParticleTraceTracksTheGridTrace) {
    const double eta = 0.1;
    MdpSpec spec = quadratic();
    auto g = grid_for(spec);
    GaussianInit init = uniform_gaussian_init(1, 1, 0.0, 0.5);
    GaussianReference ref = reference_of(spec);
    ParticleKlTrace tr = fixed_target_run(
        init_gaussian_particles(spec, init, 20000, 8),
        [&](std::size_t, std::span<const double> a) { return ref.log_density(a); }, linear_drift(1.0), eta, 1.0, 10, 8);
    double v = 0.5;
    for (std::size_t k = 0; k < tr.kl.size(); ++k) {
        EXPECT_LE(std::abs(tr.kl[k] - gaussian_kl_1d(0.0, v, 1.0)), 4.0 * tr.se[k] + 1e-3) << "k=" << k;
        v = 0.81 * v + 0.2;
    }
}

TEST(Trajectory, GapMatchesGaussianClosedForm) {
    const double gamma = 0.5, tau = 1.0, beta = 1.0, eta = 0.05;
    MdpSpec spec = quadratic(0.0, gamma, tau, beta);
    GridModel model(spec, grid_for(spec));
    GaussianInit init = uniform_gaussian_init(1, 1, 1.0, 0.5);
    ConstantsReport rep = report_for(spec, model.grid_ptr(), init, eta);
    ValueFn vstar = solve_optimal(model).value;
    EXPECT_NEAR(vstar[0], tau * reference_of(spec).log_z_beta / (1.0 - gamma), 1e-10);

    WpgdConfig cfg;
    cfg.eta = eta;
    cfg.steps = 30;
    cfg.force_eta = true;
    TrajectoryResult grid_run = run_trajectory(model, init_gaussian_grid(spec, model.grid_ptr(), init), cfg, rep, vstar);
    cfg.backend = Backend::particles;
    cfg.seed = 31;
    const std::size_t n = 10000;
    TrajectoryResult part_run = run_trajectory(model, init_gaussian_particles(spec, init, n, 31), cfg, rep, vstar);

    double m = 1.0, v = 0.5;
    for (std::size_t k = 0; k <= cfg.steps; ++k) {
        double e = vstar[0] - gaussian_policy_value(m, v, gamma, tau, beta);
        EXPECT_NEAR(grid_run.diagnostics[k].e_k, e, 1e-8) << "k=" << k;
        EXPECT_LE(std::abs(part_run.diagnostics[k].e_k - e), 5.0 / std::sqrt(double(n))) << "k=" << k;
        m *= 1.0 - beta * eta;
        v = (1.0 - beta * eta) * (1.0 - beta * eta) * v + 2.0 * tau * eta;
    }
}

TEST(Trajectory, RecursionAndEnvelopeAtTheFeasibleCeiling) {
    MdpSpec spec = quadratic();
    GridModel model(spec, grid_for(spec));
    GaussianInit init = uniform_gaussian_init(1, 1, 1.0, 0.5);
    ConstantsReport rep = report_for(spec, model.grid_ptr(), init, std::nullopt);
    WpgdConfig cfg;
    cfg.eta = rep.eta0;
    cfg.steps = 300;
    TrajectoryResult res = run_trajectory(model, init_gaussian_grid(spec, model.grid_ptr(), init), cfg, rep,
                                          solve_optimal(model).value);
    const auto& dg = res.diagnostics;
    std::size_t ok = 0;
    for (std::size_t k = 0; k + 1 < dg.size(); ++k) {
        EXPECT_LE(dg[k].e_k, dg[k].envelope) << "k=" << k;
        if (dg[k + 1].e_k <= rep.kappa_eta * dg[k].e_k + spec.tau / (1.0 - spec.gamma) * rep.delta_eta) ++ok;
        EXPECT_GE(dg[k].r_k_max, (1.0 - spec.gamma) * dg[k].e_k - 1e-8);
    }
    EXPECT_GE(double(ok), 0.95 * double(dg.size() - 1));
}

TEST(Trajectory, MomentGuardOnLogitChain) {
    MdpSpec spec = chain();
    GridModel model(spec, grid_for(spec));
    GaussianInit init = uniform_gaussian_init(2, 1, 0.0, 0.5);
    const double eta = 1.0 / (4.0 * spec.beta);
    ConstantsReport rep = report_for(spec, model.grid_ptr(), init, eta);
    WpgdConfig cfg;
    cfg.eta = eta;
    cfg.steps = 20;
    cfg.force_eta = true;
    cfg.backend = Backend::particles;
    cfg.seed = 4;
    const std::size_t n = 10000;
    TrajectoryResult res =
        run_trajectory(model, init_gaussian_particles(spec, init, n, 4), cfg, rep, solve_optimal(model).value);
    const double ceiling = std::max(rep.profile.m0, rep.m_inf_eta) + 4.0 / std::sqrt(double(n));
    for (const auto& d : res.diagnostics) EXPECT_LE(d.m_k, ceiling) << "k=" << d.k;
}

TEST(Trajectory, RejectsInfeasibleStepWithoutForce) {
    MdpSpec spec = quadratic();
    GridModel model(spec, grid_for(spec, 513));
    GaussianInit init = uniform_gaussian_init(1, 1, 0.0, 1.0);
    ConstantsReport rep = report_for(spec, model.grid_ptr(), init, std::nullopt);
    WpgdConfig cfg;
    cfg.eta = 2.0 * rep.eta0;
    try {
        run_trajectory(model, init_gaussian_grid(spec, model.grid_ptr(), init), cfg, rep, ValueFn(1, 0.0));
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find(rep.eta0_binding()), std::string::npos) << e.what();
    }
}
