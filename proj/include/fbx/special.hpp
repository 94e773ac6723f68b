#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <vector>

#include "fbx/errors.hpp"

namespace fbx {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

// Compensated (Kahan-Neumaier) accumulator for linear-domain sums.
struct KahanSum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        double t = s + x;
        if (std::abs(s) >= std::abs(x)) c += (s - t) + x;
        else c += (x - t) + s;
        s = t;
    }
    double get() const { return s + c; }
};

// Gaussian upper tail Q(x) = P[N(0,1) > x], evaluated through erfc so the
// relative error stays at a few ulp even deep into the tail.
inline double q_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse of q_tail on (0,1).  Bisection on a monotone bracket followed by a
// few Newton steps; accurate to |Q(q_inv(p)) - p| well below 1e-12.
inline double q_inv(double p) {
    if (!(p > 0.0 && p < 1.0)) throw OutOfRange("q_inv needs p in (0,1)");
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 120; ++i) {
        double mid = 0.5 * (lo + hi);
        if (q_tail(mid) > p) lo = mid;
        else hi = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 4; ++i) { // Newton polish: Q'(x) = -phi(x)
        double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
        if (phi <= 0.0) break;
        double step = (q_tail(x) - p) / phi;
        if (!std::isfinite(step)) break;
        x += std::clamp(step, -1.0, 1.0);
    }
    return x;
}

// Binary entropy in nats; h(0) = h(1) = 0.
inline double binary_entropy_nats(double p) {
    if (p < 0.0 || p > 1.0) throw OutOfRange("binary_entropy_nats needs p in [0,1]");
    double a = (p > 0.0) ? -p * std::log(p) : 0.0;
    double b = (p < 1.0) ? -(1.0 - p) * std::log1p(-p) : 0.0;
    return a + b;
}

namespace detail {
// log(n!) table; lgamma per entry (independent errors, unlike a running sum).
inline const std::vector<double>& log_factorial_table() {
    static std::vector<double> table;
    static std::once_flag once;
    std::call_once(once, [] {
        table.resize(1 << 16);
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = std::lgamma(double(i) + 1.0);
    });
    return table;
}
} // namespace detail

inline double log_factorial(std::int64_t n) {
    if (n < 0) throw OutOfRange("log_factorial needs n >= 0");
    const auto& t = detail::log_factorial_table();
    if (std::size_t(n) < t.size()) return t[std::size_t(n)];
    return std::lgamma(double(n) + 1.0);
}

inline double log_binomial(std::int64_t n, std::int64_t k) {
    if (k < 0 || n < 0 || k > n) throw OutOfRange("log_binomial needs 0 <= k <= n");
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

// log(exp(a) + exp(b)) with -inf as the additive identity.
inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log(sum exp(v)) by max-shift plus compensated linear accumulation.
inline double log_sum_exp(const std::vector<double>& v) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    KahanSum acc;
    for (double x : v) acc.add(std::exp(x - m));
    return m + std::log(acc.get());
}

// log P[Binomial(n,p) = k]
inline double log_binom_pmf(std::int64_t k, std::int64_t n, double p) {
    if (k < 0 || k > n) return kNegInf;
    if (p <= 0.0) return (k == 0) ? 0.0 : kNegInf;
    if (p >= 1.0) return (k == n) ? 0.0 : kNegInf;
    return log_binomial(n, k) + double(k) * std::log(p) + double(n - k) * std::log1p(-p);
}

// log P[Binomial(n,p) <= k] by direct log-domain summation (exact, O(k)).
inline double log_binom_cdf(std::int64_t k, std::int64_t n, double p) {
    if (k < 0) return kNegInf;
    if (k >= n) return 0.0;
    double acc = kNegInf;
    for (std::int64_t j = 0; j <= k; ++j) acc = log_add(acc, log_binom_pmf(j, n, p));
    return std::min(acc, 0.0);
}

// One-sided Clopper-Pearson limits at confidence 1 - alpha, computed by
// bisecting the exact binomial tail in p (avoids an incomplete-beta inverse).
inline double clopper_pearson_upper(std::int64_t k, std::int64_t n, double alpha) {
    if (n <= 0) throw OutOfRange("clopper_pearson_upper needs n > 0");
    if (k < 0 || k > n) throw OutOfRange("clopper_pearson_upper needs 0 <= k <= n");
    if (!(alpha > 0.0 && alpha < 1.0)) throw OutOfRange("alpha in (0,1)");
    if (k == n) return 1.0;
    double lo = double(k) / double(n), hi = 1.0;
    const double la = std::log(alpha);
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        double mid = 0.5 * (lo + hi);
        if (log_binom_cdf(k, n, mid) > la) lo = mid;
        else hi = mid;
    }
    return hi;
}

inline double clopper_pearson_lower(std::int64_t k, std::int64_t n, double alpha) {
    if (n <= 0) throw OutOfRange("clopper_pearson_lower needs n > 0");
    if (k < 0 || k > n) throw OutOfRange("clopper_pearson_lower needs 0 <= k <= n");
    if (!(alpha > 0.0 && alpha < 1.0)) throw OutOfRange("alpha in (0,1)");
    if (k == 0) return 0.0;
    // P[Bin(n,p) >= k] = alpha at the lower limit.
    double lo = 0.0, hi = double(k) / double(n);
    const double la = std::log(alpha);
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        double mid = 0.5 * (lo + hi);
        double tail = log_binom_cdf(n - k, n, 1.0 - mid); // P[Bin >= k] flipped
        if (tail > la) hi = mid;
        else lo = mid;
    }
    return lo;
}

// Empirical-Bernstein confidence bound for the mean of i.i.d. samples in
// [lo, hi] (Maurer & Pontil 2009): half-width sqrt(2 V log(3/d)/n) + 3 R log(3/d)/n.
inline double empirical_bernstein_halfwidth(double sample_var, double range,
                                            std::int64_t n, double delta) {
    if (n < 2) throw OutOfRange("empirical_bernstein needs n >= 2");
    if (!(delta > 0.0 && delta < 1.0)) throw OutOfRange("delta in (0,1)");
    double l3d = std::log(3.0 / delta);
    return std::sqrt(2.0 * std::max(sample_var, 0.0) * l3d / double(n)) +
           3.0 * range * l3d / double(n);
}

} // namespace fbx
