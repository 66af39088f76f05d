#ifndef WPGLAB_POLICY_HPP
#define WPGLAB_POLICY_HPP

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "wpglab/core.hpp"
#include "wpglab/mixture.hpp"
#include "wpglab/model.hpp"
#include "wpglab/quadrature.hpp"

namespace wpglab {

/// Per-state action densities tabulated on a shared grid.
struct GridPolicy {
    std::vector<LogDensityGrid> states;

    std::size_t num_states() const { return states.size(); }
    const ActionGrid& grid() const { return *states.at(0).grid; }
    GridPtr grid_ptr() const { return states.at(0).grid; }
    const LogDensityGrid& operator[](std::size_t s) const { return states[s]; }
};

/// Per-state Langevin particles together with the exact law they were drawn
/// from: the diagonal Gaussian initialization at step 0, afterwards the
/// equal-weight mixture of the previous step.
struct ParticleEnsemble {
    struct GaussianLaw {
        Vec mean;
        Vec var;
    };

    int dim = 1;
    std::size_t n = 0;
    std::size_t step = 0;
    std::vector<Vec> positions; // per state, n x dim, row-major
    std::vector<GaussianLaw> initial;
    std::vector<std::shared_ptr<const IsotropicGaussianMixture>> mixtures;

    std::size_t num_states() const { return positions.size(); }
    std::span<const double> particle(std::size_t s, std::size_t i) const {
        return {positions[s].data() + i * dim, static_cast<std::size_t>(dim)};
    }
    bool has_mixture() const { return !mixtures.empty(); }
};

// ---------------------------------------------------------------------------
// Initialization

inline GridPolicy init_gaussian_grid(const MdpSpec& spec, GridPtr grid, const GaussianInit& init) {
    gaussian_init_constants(spec, init); // validates shapes and variances
    if (grid->dim() != spec.action_dim) throw std::invalid_argument("init_gaussian: grid dimension mismatch");
    GridPolicy pi;
    for (std::size_t s = 0; s < spec.num_states(); ++s) {
        const Vec& mu = init.mean[s];
        const Vec& var = init.var[s];
        Vec lv = tabulate(*grid, [&](std::span<const double> a) {
            double v = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) v -= 0.5 * (a[k] - mu[k]) * (a[k] - mu[k]) / var[k];
            return v;
        });
        pi.states.push_back(make_log_density(grid, std::move(lv)));
    }
    return pi;
}

inline ParticleEnsemble init_gaussian_particles(const MdpSpec& spec, const GaussianInit& init, std::size_t n,
                                                std::uint64_t seed) {
    gaussian_init_constants(spec, init);
    if (n < 2) throw std::invalid_argument("init_gaussian: need at least 2 particles");
    ParticleEnsemble ens;
    ens.dim = spec.action_dim;
    ens.n = n;
    ens.positions.resize(spec.num_states());
    for (std::size_t s = 0; s < spec.num_states(); ++s) {
        std::mt19937_64 rng(stream_seed(seed, s, 0, 0x1d));
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec& pos = ens.positions[s];
        pos.resize(n * ens.dim);
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < ens.dim; ++k)
                pos[i * ens.dim + k] = init.mean[s][k] + std::sqrt(init.var[s][k]) * normal(rng);
        ens.initial.push_back({init.mean[s], init.var[s]});
    }
    return ens;
}

// ---------------------------------------------------------------------------
// Densities

struct DensityQuery {
    double log_value = -kInf;
    bool outside_grid = false;
};

/// Multilinear interpolation of log pi between grid nodes.
inline DensityQuery log_density(const GridPolicy& pi, std::size_t s, std::span<const double> a) {
    const ActionGrid& grid = pi.grid();
    const int d = grid.dim();
    const int n = grid.points_per_dim();
    const double h = grid.spacing();
    std::array<int, 3> base{};
    std::array<double, 3> frac{};
    for (int k = 0; k < d; ++k) {
        if (std::abs(a[k]) > grid.radius() * (1.0 + 1e-12)) return {-kInf, true};
        double x = (a[k] + grid.radius()) / h;
        int i = std::clamp(static_cast<int>(std::floor(x)), 0, n - 2);
        base[k] = i;
        frac[k] = std::clamp(x - i, 0.0, 1.0);
    }
    const Vec& lv = pi.states[s].log_values;
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        std::array<int, 3> idx = base;
        double w = 1.0;
        for (int k = 0; k < d; ++k) {
            bool up = (corner >> k) & 1;
            idx[k] += up;
            w *= up ? frac[k] : 1.0 - frac[k];
        }
        if (w == 0.0) continue;
        double v = lv[grid.flatten(idx)];
        if (v == -kInf) return {-kInf, false};
        acc += w * v;
    }
    return {acc, false};
}

inline double log_density(const ParticleEnsemble& ens, std::size_t s, std::span<const double> a) {
    if (ens.has_mixture()) return ens.mixtures[s]->log_density(a);
    const auto& law = ens.initial.at(s);
    double v = 0.0;
    for (int k = 0; k < ens.dim; ++k) {
        double z = a[k] - law.mean[k];
        v -= 0.5 * (z * z / law.var[k] + std::log(2.0 * kPi * law.var[k]));
    }
    return v;
}

inline void score(const ParticleEnsemble& ens, std::size_t s, std::span<const double> a, std::span<double> out) {
    if (ens.has_mixture()) {
        ens.mixtures[s]->score(a, out);
        return;
    }
    const auto& law = ens.initial.at(s);
    for (int k = 0; k < ens.dim; ++k) out[k] = -(a[k] - law.mean[k]) / law.var[k];
}

/// log pi evaluated at every particle of state s.
inline Vec log_density_at_particles(const ParticleEnsemble& ens, std::size_t s) {
    Vec out(ens.n);
    for (std::size_t i = 0; i < ens.n; ++i) out[i] = log_density(ens, s, ens.particle(s, i));
    return out;
}

/// Tabulates the particle law of state s on grid nodes.
inline LogDensityGrid tabulate_on_grid(const ParticleEnsemble& ens, std::size_t s, GridPtr grid) {
    Vec lv(grid->size());
    for (std::size_t p = 0; p < grid->size(); ++p) lv[p] = log_density(ens, s, grid->point(p));
    return {std::move(grid), std::move(lv)};
}

// ---------------------------------------------------------------------------
// Divergences

using LogDensityFn = std::function<double(std::span<const double>)>;
using ScoreFn = std::function<void(std::span<const double>, std::span<double>)>;

struct Diagnostics {
    double kl_to_ref = 0.0;
    double kl_se = 0.0;
    double entropy = 0.0;
    double entropy_se = 0.0;
    double second_moment = 0.0;
    std::optional<double> fisher_to_ref;
    double fisher_se = 0.0;
    bool kl_infinite = false;
    std::size_t samples = 0;
};

inline double second_moment(const GridPolicy& pi, std::size_t s) {
    const ActionGrid& grid = pi.grid();
    Vec f = tabulate(grid, [](std::span<const double> a) { return squared_norm(a); });
    return expectation(f, pi.states[s]);
}

inline double second_moment(const ParticleEnsemble& ens, std::size_t s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ens.n; ++i) acc += squared_norm(ens.particle(s, i));
    return acc / static_cast<double>(ens.n);
}

/// Exact quadrature KL, entropy and moment of a grid policy against a
/// reference log-density. Fisher information uses central differences of
/// log pi along each axis at interior nodes.
inline Diagnostics divergences(const GridPolicy& pi, std::size_t s, const LogDensityFn& ref_log_density,
                               const ScoreFn& ref_score = nullptr) {
    const LogDensityGrid& dens = pi.states.at(s);
    const ActionGrid& grid = *dens.grid;
    auto w = grid.weights();
    Diagnostics out;
    double kl = 0.0, neg_ent = 0.0, mom = 0.0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double mass = dens.density(p) * w[p];
        if (mass == 0.0) continue;
        auto a = grid.point(p);
        double lp = std::max(dens.log_values[p], kLogUnderflow);
        double lr = ref_log_density(a);
        if (lr == -kInf) {
            out.kl_infinite = true;
            continue;
        }
        kl += mass * (lp - lr);
        neg_ent += mass * lp;
        mom += mass * squared_norm(a);
    }
    out.kl_to_ref = out.kl_infinite ? kInf : kl;
    out.entropy = -neg_ent;
    out.second_moment = mom;
    out.samples = grid.size();

    if (ref_score) {
        const int d = grid.dim(), n = grid.points_per_dim();
        const double h = grid.spacing();
        std::array<int, 3> idx{};
        Vec rs(d);
        double fisher = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) {
            grid.unflatten(p, idx);
            bool interior = true;
            for (int k = 0; k < d; ++k) interior = interior && idx[k] > 0 && idx[k] < n - 1;
            double mass = dens.density(p) * w[p];
            if (!interior || mass == 0.0) continue;
            ref_score(grid.point(p), rs);
            double sq = 0.0;
            for (int k = 0; k < d; ++k) {
                auto lo = idx, hi = idx;
                --lo[k];
                ++hi[k];
                double g = (dens.log_values[grid.flatten(hi)] - dens.log_values[grid.flatten(lo)]) / (2.0 * h);
                if (!std::isfinite(g)) continue;
                sq += (g - rs[k]) * (g - rs[k]);
            }
            fisher += mass * sq;
        }
        out.fisher_to_ref = fisher;
    }
    return out;
}

/// KL(p || q) for two densities tabulated on the same grid. Nodes where q
/// vanishes but p has mass make the divergence infinite.
inline double grid_kl(const LogDensityGrid& p, const LogDensityGrid& q) {
    if (p.grid != q.grid && p.grid->size() != q.grid->size()) throw std::invalid_argument("grid_kl: grids differ");
    auto w = p.grid->weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double mass = p.density(i) * w[i];
        if (mass == 0.0) continue;
        if (q.log_values[i] == -kInf) return kInf;
        acc += mass * (std::max(p.log_values[i], kLogUnderflow) - q.log_values[i]);
    }
    return acc;
}

/// Monte-Carlo KL/entropy over the ensemble using the exact law of the
/// particles. n_mc = 0 (or >= N) uses every particle.
inline Diagnostics divergences(const ParticleEnsemble& ens, std::size_t s, const LogDensityFn& ref_log_density,
                               const ScoreFn& ref_score = nullptr, std::size_t n_mc = 0, std::uint64_t seed = 0) {
    std::vector<std::size_t> idx;
    if (n_mc == 0 || n_mc >= ens.n) {
        idx.resize(ens.n);
        for (std::size_t i = 0; i < ens.n; ++i) idx[i] = i;
    } else {
        std::mt19937_64 rng(stream_seed(seed, s, ens.step, 0xd1));
        std::uniform_int_distribution<std::size_t> pick(0, ens.n - 1);
        idx.resize(n_mc);
        for (auto& i : idx) i = pick(rng);
    }
    const double cnt = static_cast<double>(idx.size());
    double s_kl = 0.0, s_kl2 = 0.0, s_lp = 0.0, s_lp2 = 0.0, s_f = 0.0, s_f2 = 0.0;
    Diagnostics out;
    Vec g(ens.dim), rs(ens.dim);
    for (std::size_t i : idx) {
        auto a = ens.particle(s, i);
        double lp = log_density(ens, s, a);
        double lr = ref_log_density(a);
        if (lr == -kInf) {
            out.kl_infinite = true;
            continue;
        }
        double x = lp - lr;
        s_kl += x;
        s_kl2 += x * x;
        s_lp += lp;
        s_lp2 += lp * lp;
        if (ref_score) {
            score(ens, s, a, g);
            ref_score(a, rs);
            double f = 0.0;
            for (int k = 0; k < ens.dim; ++k) f += (g[k] - rs[k]) * (g[k] - rs[k]);
            s_f += f;
            s_f2 += f * f;
        }
    }
    auto se = [cnt](double sum, double sum2) {
        if (cnt < 2) return 0.0;
        double mean = sum / cnt;
        double var = std::max(0.0, (sum2 - cnt * mean * mean) / (cnt - 1.0));
        return std::sqrt(var / cnt);
    };
    out.kl_to_ref = out.kl_infinite ? kInf : s_kl / cnt;
    out.kl_se = se(s_kl, s_kl2);
    out.entropy = -s_lp / cnt;
    out.entropy_se = se(s_lp, s_lp2);
    out.second_moment = second_moment(ens, s);
    if (ref_score) {
        out.fisher_to_ref = s_f / cnt;
        out.fisher_se = se(s_f, s_f2);
    }
    out.samples = idx.size();
    return out;
}

} // namespace wpglab

#endif
