#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fbx/errors.hpp"

namespace fbx {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
} // namespace detail

// Seedable, forkable stream built on xoshiro256++ (Blackman & Vigna).  All
// sampling is implemented by hand so byte-identical output does not depend on
// the standard library's distribution internals.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id) {
        std::uint64_t x = master_seed ^ (0xA3EC647659359ACDULL * (stream_id + 1));
        for (auto& w : s_) w = detail::splitmix64(x);
        master_ = master_seed;
        id_ = stream_id;
    }

    // Child stream with an id derived from (this stream's id, child index).
    RngStream fork(std::uint64_t child) const {
        std::uint64_t h = id_;
        h = detail::splitmix64(h) ^ (child + 0x9E3779B97F4A7C15ULL);
        return RngStream(master_, detail::splitmix64(h));
    }

    std::uint64_t master_seed() const { return master_; }
    std::uint64_t stream_id() const { return id_; }

    std::uint64_t next_u64() {
        std::uint64_t r = detail::rotl(s_[0] + s_[3], 23) + s_[0];
        std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return r;
    }

    // Uniform double in [0,1) with 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Uniform integer in [0, n) by rejection from a power-of-two mask.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw OutOfRange("next_below(0)");
        if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
        std::uint64_t mask = ~0ULL >> __builtin_clzll(n | 1);
        for (;;) {
            std::uint64_t v = next_u64() & mask;
            if (v < n) return v;
        }
    }

    // Standard normal via polar Box-Muller with one cached value.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, r2;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            r2 = u * u + v * v;
        } while (r2 >= 1.0 || r2 == 0.0);
        double f = std::sqrt(-2.0 * std::log(r2) / r2);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // Index sampled from an explicit probability vector (inverse CDF scan;
    // alphabets here are tiny).  The final index absorbs rounding slack.
    int next_index(const std::vector<double>& probs) {
        double u = next_double();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return int(i);
        }
        return int(probs.size()) - 1;
    }

private:
    std::uint64_t s_[4] = {};
    std::uint64_t master_ = 0, id_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace fbx
