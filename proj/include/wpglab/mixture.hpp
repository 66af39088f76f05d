#ifndef WPGLAB_MIXTURE_HPP
#define WPGLAB_MIXTURE_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "wpglab/core.hpp"

namespace wpglab {

/// Equal-weight mixture of N isotropic Gaussians with a shared variance:
///   pi(y) = (1/N) sum_i phi_{variance}(y - c_i).
/// This is exactly the law of one Langevin step given the previous particles.
///
/// In one dimension the density is evaluated with a box-wise Taylor expansion
/// of the Gaussian kernel (relative error well below 1e-10), which keeps
/// self-evaluation at all N particles near-linear in N. Higher dimensions use
/// a direct log-sum-exp over all components.
class IsotropicGaussianMixture {
public:
    IsotropicGaussianMixture() = default;

    IsotropicGaussianMixture(int dim, Vec centers, double variance)
        : dim_(dim), centers_(std::move(centers)), variance_(variance) {
        if (dim_ < 1) throw std::invalid_argument("mixture: dimension must be positive");
        if (!(variance_ > 0.0)) throw std::invalid_argument("mixture: variance must be > 0");
        if (centers_.empty() || centers_.size() % dim_ != 0) throw std::invalid_argument("mixture: bad center array");
        n_ = centers_.size() / dim_;
        sigma_ = std::sqrt(variance_);
        log_norm_ = -0.5 * dim_ * std::log(2.0 * kPi * variance_) - std::log(static_cast<double>(n_));
        // Components farther than sqrt(dmin^2 + cut) sigma contribute < 1e-17 relative in total.
        window_sq_ = 2.0 * (std::log(static_cast<double>(n_)) + 40.0);
        if (dim_ == 1) build_boxes();
    }

    int dim() const { return dim_; }
    std::size_t size() const { return n_; }
    double variance() const { return variance_; }
    std::span<const double> centers() const { return centers_; }

    double log_density(std::span<const double> y) const {
        if (dim_ == 1) return log_density_1d(y[0]);
        return log_density_direct(y);
    }

    /// Gradient of log pi at y (direct sum over components in range).
    void score(std::span<const double> y, std::span<double> out) const {
        // weights w_i proportional to exp(-|y-c_i|^2 / (2 var)); score = sum w_i (c_i - y) / var
        double mx = -kInf;
        std::vector<double> lw(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            lw[i] = -0.5 * sq_dist(y, i) / variance_;
            mx = std::max(mx, lw[i]);
        }
        std::fill(out.begin(), out.end(), 0.0);
        double z = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            double w = std::exp(lw[i] - mx);
            z += w;
            for (int k = 0; k < dim_; ++k) out[k] += w * (centers_[i * dim_ + k] - y[k]);
        }
        for (int k = 0; k < dim_; ++k) out[k] /= z * variance_;
    }

private:
    static constexpr int kTerms = 36;
    static constexpr double kTaylorReach = 6.0; // nearest component within this many sigma

    double sq_dist(std::span<const double> y, std::size_t i) const {
        double s = 0.0;
        for (int k = 0; k < dim_; ++k) {
            double x = y[k] - centers_[i * dim_ + k];
            s += x * x;
        }
        return s;
    }

    double log_density_direct(std::span<const double> y) const {
        double mx = -kInf;
        for (std::size_t i = 0; i < n_; ++i) mx = std::max(mx, -0.5 * sq_dist(y, i) / variance_);
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) acc += std::exp(-0.5 * sq_dist(y, i) / variance_ - mx);
        return log_norm_ + mx + std::log(acc);
    }

    void build_boxes() {
        sorted_ = centers_;
        std::sort(sorted_.begin(), sorted_.end());
        lo_ = sorted_.front();
        std::size_t nbox = static_cast<std::size_t>(std::floor((sorted_.back() - lo_) / sigma_)) + 1;
        box_begin_.assign(nbox + 1, 0);
        moments_.assign(nbox * kTerms, 0.0);
        std::size_t i = 0;
        for (std::size_t b = 0; b < nbox; ++b) {
            box_begin_[b] = i;
            double x0 = box_center(b);
            double upper = lo_ + (b + 1) * sigma_;
            while (i < n_ && (sorted_[i] < upper || b + 1 == nbox)) {
                double u = (sorted_[i] - x0) / sigma_;
                double term = std::exp(-0.5 * u * u);
                for (int k = 0; k < kTerms; ++k) {
                    moments_[b * kTerms + k] += term;
                    term *= u / (k + 1);
                }
                ++i;
            }
        }
        box_begin_[nbox] = n_;
    }

    double box_center(std::size_t b) const { return lo_ + (b + 0.5) * sigma_; }

    double log_density_1d(double y) const {
        auto it = std::lower_bound(sorted_.begin(), sorted_.end(), y);
        double dmin = kInf;
        if (it != sorted_.end()) dmin = std::min(dmin, *it - y);
        if (it != sorted_.begin()) dmin = std::min(dmin, y - *(it - 1));
        double dmin_s = dmin / sigma_;
        double reach = std::sqrt(dmin_s * dmin_s + window_sq_) * sigma_;

        if (dmin_s > kTaylorReach) {
            // Far tail: exact log-sum-exp over components that can matter.
            auto first = std::lower_bound(sorted_.begin(), sorted_.end(), y - reach);
            auto last = std::upper_bound(sorted_.begin(), sorted_.end(), y + reach);
            double mx = -0.5 * dmin_s * dmin_s;
            double acc = 0.0;
            for (auto p = first; p != last; ++p) {
                double z = (y - *p) / sigma_;
                acc += std::exp(-0.5 * z * z - mx);
            }
            return log_norm_ + mx + std::log(acc);
        }

        std::size_t nbox = box_begin_.size() - 1;
        double fb_lo = std::floor((y - reach - lo_) / sigma_);
        double fb_hi = std::floor((y + reach - lo_) / sigma_);
        std::size_t b_lo = fb_lo < 0 ? 0 : static_cast<std::size_t>(fb_lo);
        std::size_t b_hi = fb_hi < 0 ? 0 : std::min(nbox - 1, static_cast<std::size_t>(fb_hi));
        double acc = 0.0;
        for (std::size_t b = b_lo; b <= b_hi && b < nbox; ++b) {
            if (box_begin_[b] == box_begin_[b + 1]) continue;
            double t = (y - box_center(b)) / sigma_;
            const double* mo = &moments_[b * kTerms];
            double poly = mo[kTerms - 1];
            for (int k = kTerms - 2; k >= 0; --k) poly = poly * t + mo[k];
            acc += std::exp(-0.5 * t * t) * poly;
        }
        if (!(acc > 0.0)) return log_density_direct(std::span<const double>(&y, 1));
        return log_norm_ + std::log(acc);
    }

    int dim_ = 1;
    std::size_t n_ = 0;
    Vec centers_;
    double variance_ = 1.0;
    double sigma_ = 1.0;
    double log_norm_ = 0.0;
    double window_sq_ = 0.0;

    // 1-D acceleration structure
    Vec sorted_;
    double lo_ = 0.0;
    std::vector<std::size_t> box_begin_;
    Vec moments_;
};

} // namespace wpglab

#endif
