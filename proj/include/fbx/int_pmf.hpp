#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fbx/errors.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Probability mass function on the integer lattice {offset, offset+1, ...}
// scaled by lattice_step.  Mass on -infinity (divergent density values) is
// carried explicitly instead of being dropped.
struct IntPmf {
    std::int64_t offset = 0;
    std::vector<double> probs;      // probs[i] = P[value == (offset + i) * lattice_step]
    double lattice_step = 1.0;
    double neginf_mass = 0.0;

    double total_mass() const {
        KahanSum acc;
        for (double p : probs) acc.add(p);
        acc.add(neginf_mass);
        return acc.get();
    }

    double mean() const {
        KahanSum acc;
        for (std::size_t i = 0; i < probs.size(); ++i)
            acc.add(probs[i] * (double(offset) + double(i)));
        return acc.get() * lattice_step;
    }

    double variance() const {
        double m = mean() / lattice_step;
        KahanSum acc;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            double d = double(offset) + double(i) - m;
            acc.add(probs[i] * d * d);
        }
        return acc.get() * lattice_step * lattice_step;
    }

    void validate(double tol = 1e-9) const {
        if (lattice_step <= 0.0) throw InvalidDistribution("IntPmf lattice_step must be > 0");
        if (probs.empty()) throw InvalidDistribution("IntPmf needs at least one lattice point");
        for (double p : probs)
            if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidDistribution("IntPmf has a negative or non-finite mass");
        if (!(neginf_mass >= 0.0)) throw InvalidDistribution("IntPmf neginf_mass must be >= 0");
        if (std::abs(total_mass() - 1.0) > tol) throw InvalidDistribution("IntPmf masses do not sum to 1");
    }
};

namespace detail {

inline constexpr std::size_t kLatticeSupportCap = std::size_t(1) << 22;

// Log-domain convolution of two lattice pmfs sharing a step.  For each output
// bin the terms are accumulated linearly after a max shift (compensated).
inline IntPmf convolve_same_step(const IntPmf& a, const IntPmf& b) {
    std::size_t out_size = a.probs.size() + b.probs.size() - 1;
    if (out_size > kLatticeSupportCap)
        throw SupportOverflow("lattice convolution support exceeds 2^22 bins");
    std::vector<double> la(a.probs.size()), lb(b.probs.size());
    for (std::size_t i = 0; i < a.probs.size(); ++i) la[i] = a.probs[i] > 0 ? std::log(a.probs[i]) : kNegInf;
    for (std::size_t i = 0; i < b.probs.size(); ++i) lb[i] = b.probs[i] > 0 ? std::log(b.probs[i]) : kNegInf;
    IntPmf out;
    out.offset = a.offset + b.offset;
    out.lattice_step = a.lattice_step;
    out.probs.assign(out_size, 0.0);
    for (std::size_t k = 0; k < out_size; ++k) {
        std::size_t ilo = (k >= b.probs.size() - 1) ? k - (b.probs.size() - 1) : 0;
        std::size_t ihi = std::min(k, a.probs.size() - 1);
        double m = kNegInf;
        for (std::size_t i = ilo; i <= ihi; ++i) {
            double t = la[i] + lb[k - i];
            if (t > m) m = t;
        }
        if (m == kNegInf) continue;
        KahanSum acc;
        for (std::size_t i = ilo; i <= ihi; ++i) {
            double t = la[i] + lb[k - i];
            if (t != kNegInf) acc.add(std::exp(t - m));
        }
        out.probs[k] = std::exp(m) * acc.get();
    }
    // Sum hits -inf iff any summand does.
    double af = 1.0 - a.neginf_mass, bf = 1.0 - b.neginf_mass;
    out.neginf_mass = 1.0 - af * bf;
    return out;
}

} // namespace detail

// n-fold self-convolution by binary powering.  n = 0 gives the point mass at
// zero on the same lattice.
inline IntPmf lattice_convolve_power(const IntPmf& base, std::int64_t n) {
    if (n < 0) throw OutOfRange("lattice_convolve_power needs n >= 0");
    base.validate();
    if (std::size_t(n) * (base.probs.size() - 1) + 1 > detail::kLatticeSupportCap)
        throw SupportOverflow("n-fold lattice support exceeds 2^22 bins");
    IntPmf result;
    result.offset = 0;
    result.lattice_step = base.lattice_step;
    result.probs = {1.0};
    if (n == 0) return result;
    IntPmf sq = base;
    std::int64_t k = n;
    bool first = true;
    while (k > 0) {
        if (k & 1) {
            result = first ? sq : detail::convolve_same_step(result, sq);
            first = false;
        }
        k >>= 1;
        if (k > 0) sq = detail::convolve_same_step(sq, sq);
    }
    return result;
}

} // namespace fbx
