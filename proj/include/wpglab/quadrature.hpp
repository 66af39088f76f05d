#ifndef WPGLAB_QUADRATURE_HPP
#define WPGLAB_QUADRATURE_HPP

#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wpglab/core.hpp"

namespace wpglab {

/// Truncated tensor-product action grid on [-radius, radius]^dim with
/// composite trapezoid weights. Point index is row-major: the last axis
/// varies fastest.
class ActionGrid {
public:
    static constexpr std::size_t kMaxPoints = 10'000'000;

    ActionGrid(int dim, double radius, int points_per_dim) : dim_(dim), radius_(radius), n_(points_per_dim) {
        if (dim < 1 || dim > 3) throw std::invalid_argument("build_grid: dimension must be 1, 2 or 3");
        if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("build_grid: radius must be > 0");
        if (points_per_dim < 3) throw std::invalid_argument("build_grid: need at least 3 points per dimension");
        double total = std::pow(static_cast<double>(points_per_dim), dim);
        if (total > static_cast<double>(kMaxPoints))
            throw std::invalid_argument("build_grid: n^d exceeds the 1e7 point memory guard");

        spacing_ = 2.0 * radius / (n_ - 1);
        axis_.resize(n_);
        axis_weights_.resize(n_);
        for (int i = 0; i < n_; ++i) {
            axis_[i] = -radius + spacing_ * i;
            axis_weights_[i] = (i == 0 || i == n_ - 1) ? 0.5 * spacing_ : spacing_;
        }
        // Exact endpoint and symmetric centre.
        axis_[n_ - 1] = radius;
        for (int i = 0; i < n_ / 2; ++i) axis_[n_ - 1 - i] = -axis_[i];
        if (n_ % 2 == 1) axis_[n_ / 2] = 0.0;

        size_ = static_cast<std::size_t>(total);
        points_.resize(size_ * dim_);
        weights_.resize(size_);
        log_weights_.resize(size_);
        std::array<int, 3> idx{0, 0, 0};
        for (std::size_t p = 0; p < size_; ++p) {
            unflatten(p, idx);
            double w = 1.0;
            for (int k = 0; k < dim_; ++k) {
                points_[p * dim_ + k] = axis_[idx[k]];
                w *= axis_weights_[idx[k]];
            }
            weights_[p] = w;
            log_weights_[p] = std::log(w);
        }
    }

    int dim() const { return dim_; }
    double radius() const { return radius_; }
    int points_per_dim() const { return n_; }
    double spacing() const { return spacing_; }
    std::size_t size() const { return size_; }

    std::span<const double> point(std::size_t p) const { return {points_.data() + p * dim_, static_cast<std::size_t>(dim_)}; }
    std::span<const double> points() const { return points_; }
    std::span<const double> weights() const { return weights_; }
    std::span<const double> log_weights() const { return log_weights_; }
    std::span<const double> axis() const { return axis_; }

    void unflatten(std::size_t p, std::array<int, 3>& idx) const {
        for (int k = dim_ - 1; k >= 0; --k) {
            idx[k] = static_cast<int>(p % n_);
            p /= n_;
        }
    }

    std::size_t flatten(const std::array<int, 3>& idx) const {
        std::size_t p = 0;
        for (int k = 0; k < dim_; ++k) p = p * n_ + idx[k];
        return p;
    }

private:
    int dim_;
    double radius_;
    int n_;
    double spacing_ = 0.0;
    std::size_t size_ = 0;
    Vec axis_, axis_weights_;
    Vec points_, weights_, log_weights_;
};

using GridPtr = std::shared_ptr<const ActionGrid>;

inline GridPtr build_grid(int d, double radius, int n) { return std::make_shared<const ActionGrid>(d, radius, n); }

/// Mass of the Gaussian reference N(0, (tau/beta) I_d) outside [-radius, radius]^d.
inline double gaussian_tail_mass(int d, double radius, double beta, double tau) {
    double q = std::erfc(radius * std::sqrt(beta / tau) / std::sqrt(2.0));
    // 1 - (1 - q)^d without cancellation.
    return -std::expm1(d * std::log1p(-q));
}

inline double tail_certificate(const ActionGrid& grid, double beta, double tau) {
    return gaussian_tail_mass(grid.dim(), grid.radius(), beta, tau);
}

/// Smallest multiple of 0.5 whose tail certificate is below eps_tail.
inline double auto_radius(int d, double beta, double tau, double eps_tail) {
    if (!(eps_tail > 0.0)) throw std::invalid_argument("auto_radius: eps_tail must be > 0");
    double r = 0.5;
    while (gaussian_tail_mass(d, r, beta, tau) >= eps_tail) {
        r += 0.5;
        if (r > 1e6) throw std::invalid_argument("auto_radius: no finite radius meets eps_tail");
    }
    return r;
}

/// log of the integral of exp(g) over the grid, computed with a log-sum-exp shift.
inline double log_integral_exp(std::span<const double> g, const ActionGrid& grid) {
    if (g.size() != grid.size()) throw std::invalid_argument("log_integral_exp: size mismatch");
    auto lw = grid.log_weights();
    double shift = -kInf;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::isnan(g[i]) || g[i] == kInf) throw NumericalError("log_integral_exp: non-finite integrand");
        shift = std::max(shift, g[i] + lw[i]);
    }
    if (shift == -kInf) throw NumericalError("log_integral_exp: empty mass (all values are -inf)");
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double x = g[i] + lw[i] - shift;
        if (x > kLogUnderflow) acc += std::exp(x);
    }
    return shift + std::log(acc);
}

/// Per-node log values of a density over a shared grid.
struct LogDensityGrid {
    GridPtr grid;
    Vec log_values;

    double density(std::size_t p) const {
        double lv = log_values[p];
        return lv > kLogUnderflow ? std::exp(lv) : 0.0;
    }

    /// log of the total quadrature mass; 0 for a normalized density.
    double log_mass() const { return log_integral_exp(log_values, *grid); }

    void normalize() {
        double lm = log_mass();
        for (double& v : log_values) v -= lm;
    }
};

inline LogDensityGrid make_log_density(GridPtr grid, Vec log_values, bool normalize = true) {
    LogDensityGrid out{std::move(grid), std::move(log_values)};
    if (out.log_values.size() != out.grid->size()) throw std::invalid_argument("make_log_density: size mismatch");
    if (normalize) out.normalize();
    return out;
}

/// Quadrature expectation sum_i f_i * density_i * w_i.
inline double expectation(std::span<const double> f, const LogDensityGrid& density) {
    const auto& grid = *density.grid;
    if (f.size() != grid.size()) throw std::invalid_argument("expectation: size mismatch");
    auto w = grid.weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        double p = density.density(i);
        if (p != 0.0) acc += f[i] * p * w[i];
    }
    if (!std::isfinite(acc)) throw NumericalError("expectation: non-finite result");
    return acc;
}

template <class Fn>
Vec tabulate(const ActionGrid& grid, Fn&& fn) {
    Vec out(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) out[p] = fn(grid.point(p));
    return out;
}

} // namespace wpglab

#endif
