#ifndef WPGLAB_CORE_HPP
#define WPGLAB_CORE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace wpglab {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kPi = 3.14159265358979323846;

/// Below this log-value exp() underflows to zero in double precision.
inline constexpr double kLogUnderflow = -745.0;

/// Raised when a computation cannot proceed: empty mass, divergence, particle escape.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("sup_distance: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return s;
}

inline double max_of(std::span<const double> v) {
    double m = -kInf;
    for (double x : v) m = std::max(m, x);
    return m;
}

inline double min_of(std::span<const double> v) {
    double m = kInf;
    for (double x : v) m = std::min(m, x);
    return m;
}

// ---------------------------------------------------------------------------
// Seeding. Every random stream is keyed by (seed, state, step) so results do
// not depend on how work is scheduled across threads.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t state, std::uint64_t step,
                                 std::uint64_t salt = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (state + 0x632be59bd9b4e019ull));
    h = splitmix64(h ^ (step + 0x8cb92ba72f3d8dd7ull));
    return splitmix64(h ^ salt);
}

// ---------------------------------------------------------------------------
// Worker pool size. States are processed bulk-synchronously; the pool size is
// a process-wide knob set by the harness.

namespace detail {
inline std::atomic<unsigned>& worker_count_ref() {
    static std::atomic<unsigned> count{1};
    return count;
}
} // namespace detail

inline unsigned worker_count() { return detail::worker_count_ref().load(); }

inline void set_worker_count(unsigned n) { detail::worker_count_ref().store(std::max(1u, n)); }

/// Reads WPG_LAB_THREADS; returns `fallback` when unset or malformed.
inline unsigned threads_from_env(unsigned fallback) {
    const char* env = std::getenv("WPG_LAB_THREADS");
    if (env == nullptr || *env == '\0') return fallback;
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return fallback;
    return static_cast<unsigned>(v);
}

/// Calls fn(i) for i in [0, n). Iterations must be independent.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace wpglab

#endif
