#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace wpglab;
using wpglab::test::gaussian_kl_1d;
using wpglab::test::grid_for;
using wpglab::test::quadratic;

namespace {

LogDensityFn reference_log_density(const MdpSpec& spec) {
    GaussianReference ref = reference_of(spec);
    return [ref](std::span<const double> a) { return ref.log_density(a); };
}

ScoreFn reference_score(const MdpSpec& spec) {
    GaussianReference ref = reference_of(spec);
    return [ref](std::span<const double> a, std::span<double> out) { ref.score(a, out); };
}

/// Mean |log pi_particles - log pi_oracle| under the oracle law, so that the
/// far tails of the grid (where both densities underflow) do not dominate.
double mixture_error(const ParticleEnsemble& ens, const GridPolicy& oracle) {
    const ActionGrid& g = oracle.grid();
    auto w = g.weights();
    double acc = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        double mass = w[p] * oracle[0].density(p);
        if (mass > 0.0) acc += mass * std::abs(log_density(ens, 0, g.point(p)) - oracle[0].log_values[p]);
    }
    return acc;
}

} // namespace

TEST(GridPolicy, GaussianInitIsNormalized) {
    MdpSpec spec = test::chain();
    auto g = grid_for(spec);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(2, 1, 0.5, 0.3));
    for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(pi[s].log_mass(), 0.0, 1e-8);
}

TEST(GridPolicy, ReferenceSecondMomentAndEntropy) {
    MdpSpec spec = quadratic(0.0, 0.5, 1.0, 2.0);
    auto g = grid_for(spec);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, 0.5));
    EXPECT_NEAR(second_moment(pi, 0), 0.5, 1e-6);
    Diagnostics dg = divergences(pi, 0, reference_log_density(spec), reference_score(spec));
    EXPECT_NEAR(dg.kl_to_ref, 0.0, 1e-10);
    EXPECT_NEAR(*dg.fisher_to_ref, 0.0, 1e-6);
    EXPECT_NEAR(dg.entropy, 0.5 * std::log(2.0 * kPi * std::exp(1.0) * 0.5), 1e-6);
}

TEST(GridPolicy, NarrowGaussianKlMatchesClosedForm) {
    MdpSpec spec = quadratic(0.0, 0.5, 1.0, 2.0);
    auto g = grid_for(spec);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, 0.25));
    Diagnostics dg = divergences(pi, 0, reference_log_density(spec));
    EXPECT_NEAR(dg.kl_to_ref, 0.096574, 1e-6);
    EXPECT_NEAR(dg.kl_to_ref, gaussian_kl_1d(0.0, 0.25, 0.5), 1e-10);
}

TEST(GridPolicy, FisherInformationOfShiftedGaussian) {
    // I(N(m, s2) || N(0, s2)) = m^2 / s2
    MdpSpec spec = quadratic(0.0, 0.5, 1.0, 1.0);
    auto g = grid_for(spec);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.7, 1.0));
    Diagnostics dg = divergences(pi, 0, reference_log_density(spec), reference_score(spec));
    EXPECT_NEAR(*dg.fisher_to_ref, 0.49, 1e-6);
}

TEST(GridPolicy, EntropyOfGaussianInTwoDimensions) {
    MdpSpec spec = quadratic(0.0, 0.5, 1.0, 1.0, 2);
    auto g = build_grid(2, 8.0, 201);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 2, 0.2, 0.6));
    Diagnostics dg = divergences(pi, 0, reference_log_density(spec));
    EXPECT_NEAR(dg.entropy, std::log(2.0 * kPi * std::exp(1.0) * 0.6), 1e-6);
    EXPECT_NEAR(dg.kl_to_ref, 2.0 * gaussian_kl_1d(0.2, 0.6, 1.0), 1e-6);
}

TEST(GridPolicy, SymmetricSecondMomentIsTwiceTheHalfLine) {
    MdpSpec spec = quadratic();
    auto g = grid_for(spec, 1001);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, 0.8));
    double half = 0.0;
    auto w = g->weights();
    for (std::size_t p = 0; p < g->size(); ++p) {
        double a = g->point(p)[0];
        double weight = a > 0.0 ? 1.0 : (a == 0.0 ? 0.5 : 0.0);
        half += weight * a * a * pi[0].density(p) * w[p];
    }
    EXPECT_NEAR(second_moment(pi, 0), 2.0 * half, 1e-10);
}

TEST(GridPolicy, LogDensityInterpolationAndOutsideFlag) {
    MdpSpec spec = quadratic(0.0, 0.5, 1.0, 2.0 * kPi);
    auto g = build_grid(1, 4.0, 801);
    GridPolicy pi = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.0, 1.0 / (2.0 * kPi)));
    Vec zero{0.0}, far{4.5}, mid{0.1234};
    EXPECT_NEAR(log_density(pi, 0, zero).log_value, 0.0, 1e-10);
    DensityQuery q = log_density(pi, 0, far);
    EXPECT_TRUE(q.outside_grid);
    EXPECT_EQ(q.log_value, -kInf);
    EXPECT_NEAR(log_density(pi, 0, mid).log_value, -kPi * 0.1234 * 0.1234, 1e-4);
}

TEST(GridPolicy, KlBetweenGridDensities) {
    MdpSpec spec = quadratic();
    auto g = grid_for(spec);
    GridPolicy p = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, 0.3, 0.5));
    GridPolicy q = init_gaussian_grid(spec, g, uniform_gaussian_init(1, 1, -0.2, 1.5));
    // q is wider than the reference the grid was sized for, hence the looser tolerance
    EXPECT_NEAR(grid_kl(p[0], q[0]), gaussian_kl_1d(0.5, 0.5, 1.5), 1e-8);
    EXPECT_NEAR(grid_kl(p[0], p[0]), 0.0, 1e-14);
}

TEST(Mixture, SingleComponentDensity) {
    IsotropicGaussianMixture mix(1, Vec{0.0}, 1.0);
    Vec y{0.0};
    EXPECT_NEAR(mix.log_density(y), -0.5 * std::log(2.0 * kPi), 1e-12);
    EXPECT_NEAR(mix.log_density(y), -0.918939, 1e-6);
}

TEST(Mixture, FastPathMatchesDirectSum) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 2.0);
    Vec centers(5000);
    for (double& c : centers) c = normal(rng);
    const double var = 0.03;
    IsotropicGaussianMixture mix(1, centers, var);
    std::uniform_real_distribution<double> unif(-12.0, 12.0);
    for (int i = 0; i < 300; ++i) {
        double y = unif(rng);
        double mx = -kInf;
        for (double c : centers) mx = std::max(mx, -0.5 * (y - c) * (y - c) / var);
        double acc = 0.0;
        for (double c : centers) acc += std::exp(-0.5 * (y - c) * (y - c) / var - mx);
        double direct = mx + std::log(acc) - 0.5 * std::log(2.0 * kPi * var) - std::log(5000.0);
        Vec q{y};
        EXPECT_NEAR(mix.log_density(q), direct, 1e-9 * (1.0 + std::abs(direct))) << "y=" << y;
    }
}

TEST(Mixture, ScoreMatchesFiniteDifferences) {
    IsotropicGaussianMixture mix(2, Vec{0.0, 0.0, 1.0, -0.5, -0.3, 0.8}, 0.2);
    Vec y{0.4, 0.1}, g(2);
    mix.score(y, g);
    for (int k = 0; k < 2; ++k) {
        Vec yp = y, ym = y;
        yp[k] += 1e-6;
        ym[k] -= 1e-6;
        EXPECT_NEAR(g[k], (mix.log_density(yp) - mix.log_density(ym)) / 2e-6, 1e-6);
    }
}

TEST(ParticleEnsemble, ReferenceSamplesHaveZeroKlAndFisher) {
    MdpSpec spec = quadratic(0.0, 0.5, 1.0, 2.0);
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 0.0, 0.5), 20000, 5);
    Diagnostics dg = divergences(ens, 0, reference_log_density(spec), reference_score(spec));
    EXPECT_LE(std::abs(dg.kl_to_ref), 3.0 * dg.kl_se + 1e-12);
    EXPECT_LE(std::abs(*dg.fisher_to_ref), 3.0 * dg.fisher_se + 1e-12);
    EXPECT_NEAR(dg.second_moment, 0.5, 4.0 / std::sqrt(20000.0));
}

TEST(ParticleEnsemble, ParticlesAtOriginHaveZeroMoment) {
    ParticleEnsemble ens;
    ens.dim = 1;
    ens.n = 4;
    ens.positions = {Vec(4, 0.0)};
    EXPECT_EQ(second_moment(ens, 0), 0.0);
}

TEST(ParticleEnsemble, SubsampledDiagnosticsAreSeeded) {
    MdpSpec spec = quadratic();
    ParticleEnsemble ens = init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 0.5, 0.5), 5000, 1);
    Diagnostics a = divergences(ens, 0, reference_log_density(spec), nullptr, 1000, 9);
    Diagnostics b = divergences(ens, 0, reference_log_density(spec), nullptr, 1000, 9);
    EXPECT_EQ(a.kl_to_ref, b.kl_to_ref);
    EXPECT_EQ(a.samples, 1000u);
    EXPECT_NEAR(a.kl_to_ref, gaussian_kl_1d(0.5, 0.5, 1.0), 4.0 * a.kl_se);
}

TEST(ParticleEnsemble, InitRejectsBadArguments) {
    MdpSpec spec = quadratic();
    EXPECT_THROW(init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 0.0, 1.0), 1, 0), std::invalid_argument);
    EXPECT_THROW(init_gaussian_particles(spec, uniform_gaussian_init(1, 1, 0.0, -1.0), 10, 0), std::invalid_argument);
}

TEST(ParticleEnsemble, MixtureMatchesOracleConvolution) {
    MdpSpec spec = quadratic();
    auto g = grid_for(spec);
    GaussianInit init = uniform_gaussian_init(1, 1, 0.0, 1.0);
    const double eta = 0.1;
    DriftFn drift = [](std::size_t, std::span<const double> a, std::span<double> out) { out[0] = -a[0]; };
    GridDriftFn grid_drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -g->point(p)[0]; };
    GridPolicy oracle = grid_oracle_step(init_gaussian_grid(spec, g, init), grid_drift, eta, spec.tau).next;

    ParticleEnsemble ens = init_gaussian_particles(spec, init, 10000, 21);
    ParticleEnsemble next = langevin_step(ens, drift, eta, spec.tau, 21).next;
    EXPECT_LE(mixture_error(next, oracle), 0.02);
}

TEST(ParticleEnsemble, MixtureErrorShrinksWithEnsembleSize) {
    MdpSpec spec = quadratic();
    auto g = grid_for(spec, 1025);
    GaussianInit init = uniform_gaussian_init(1, 1, 0.0, 1.0);
    const double eta = 0.1;
    DriftFn drift = [](std::size_t, std::span<const double> a, std::span<double> out) { out[0] = -a[0]; };
    GridDriftFn grid_drift = [&](std::size_t, std::size_t p, std::span<double> out) { out[0] = -g->point(p)[0]; };
    GridPolicy oracle = grid_oracle_step(init_gaussian_grid(spec, g, init), grid_drift, eta, spec.tau).next;
    double small = 0.0, large = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (std::size_t n : {10000u, 40000u}) {
            ParticleEnsemble ens = init_gaussian_particles(spec, init, n, seed);
            double err = mixture_error(langevin_step(ens, drift, eta, spec.tau, seed).next, oracle);
            (n == 10000u ? small : large) += err / 5.0;
        }
    }
    EXPECT_LE(large, 0.7 * small);
}
