#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fbx/errors.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Joint law of the two decoders' error counts under the feedback rule that
// routes the cleaner BSC leg to whichever decoder has accumulated *more*
// errors (fair coin on ties).  Truncated to |z1 - z2| <= band; mass leaving
// the band is accumulated separately and later charged as error.
struct CoupledPmf {
    std::vector<double> z1_pmf, z2_pmf;
    double folded_mass = 0.0;
    int band = 0;
};

inline CoupledPmf coupled_pmf(std::int64_t n, double q1, double q2,
                              std::optional<int> band = std::nullopt,
                              double max_fold = 1e-12) {
    if (n < 0) throw OutOfRange("coupled_pmf needs n >= 0");
    if (!(q1 >= 0.0 && q1 <= 1.0 && q2 >= 0.0 && q2 <= 1.0))
        throw OutOfRange("coupled_pmf needs q1,q2 in [0,1]");
    int d_cap;
    if (band) {
        d_cap = *band;
        if (d_cap < 1) throw OutOfRange("band must be >= 1");
    } else {
        d_cap = 8 * int(std::ceil(std::sqrt(std::max(q1, q2) * double(std::max<std::int64_t>(n, 1)))));
        d_cap = std::max(d_cap, 8);
    }
    d_cap = int(std::min<std::int64_t>(d_cap, n + 1)); // band >= n+1 disables folding

    const std::size_t dn = 2 * std::size_t(d_cap) + 1;
    const std::size_t zn = std::size_t(n) + 1;
    std::vector<double> cur(dn * zn, 0.0), next(dn * zn, 0.0);
    auto at = [&](std::vector<double>& v, int d, std::int64_t z) -> double& {
        return v[std::size_t(d + d_cap) * zn + std::size_t(z)];
    };
    at(cur, 0, 0) = 1.0;
    double folded = 0.0;

    // Outcome table for one step given the (decoder1, decoder2) flip rates:
    // {dz1, dd, prob}.
    struct Outcome { int dz1, dd; double p; };
    auto outcomes = [](double qa, double qb) {
        return std::array<Outcome, 4>{{{0, 0, (1 - qa) * (1 - qb)},
                                       {1, 1, qa * (1 - qb)},
                                       {0, -1, (1 - qa) * qb},
                                       {1, 0, qa * qb}}};
    };
    const auto lead1 = outcomes(q1, q2);  // z1 > z2: decoder 1 gets the clean leg
    const auto lead2 = outcomes(q2, q1);
    std::array<Outcome, 8> tie;
    for (int i = 0; i < 4; ++i) {
        tie[std::size_t(i)] = {lead1[std::size_t(i)].dz1, lead1[std::size_t(i)].dd, 0.5 * lead1[std::size_t(i)].p};
        tie[std::size_t(i + 4)] = {lead2[std::size_t(i)].dz1, lead2[std::size_t(i)].dd, 0.5 * lead2[std::size_t(i)].p};
    }

    for (std::int64_t i = 0; i < n; ++i) {
        int dmax = int(std::min<std::int64_t>(i, d_cap));
        int dnext = int(std::min<std::int64_t>(i + 1, d_cap));
        std::int64_t znext = std::min<std::int64_t>(i + 1, n);
        for (int d = -dnext; d <= dnext; ++d)
            std::fill_n(&at(next, d, 0), std::size_t(znext) + 1, 0.0);
        for (int d = -dmax; d <= dmax; ++d) {
            const Outcome* table = d > 0 ? lead1.data() : (d < 0 ? lead2.data() : tie.data());
            int tsize = d == 0 ? 8 : 4;
            double* row = &cur[std::size_t(d + d_cap) * zn];
            for (std::int64_t z = 0; z <= i; ++z) {
                double p = row[z];
                if (p == 0.0) continue;
                for (int t = 0; t < tsize; ++t) {
                    const Outcome& o = table[t];
                    int nd = d + o.dd;
                    if (nd > d_cap || nd < -d_cap) {
                        folded += p * o.p;
                        continue;
                    }
                    at(next, nd, z + o.dz1) += p * o.p;
                }
            }
        }
        std::swap(cur, next);
    }

    if (folded > max_fold)
        throw TruncationMassExceeded("coupled_pmf band " + std::to_string(d_cap) +
                                     " leaks mass " + std::to_string(folded));
    CoupledPmf out;
    out.band = d_cap;
    out.folded_mass = folded;
    out.z1_pmf.assign(zn, 0.0);
    out.z2_pmf.assign(zn, 0.0);
    for (int d = -d_cap; d <= d_cap; ++d)
        for (std::int64_t z = 0; z <= n; ++z) {
            double p = at(cur, d, z);
            if (p == 0.0) continue;
            out.z1_pmf[std::size_t(z)] += p;
            std::int64_t z2 = z - d;
            if (z2 >= 0 && z2 <= n) out.z2_pmf[std::size_t(z2)] += p;
        }
    return out;
}

// log P[Bin(n, 1/2) <= t] for all t, built once per blocklength.
inline std::vector<double> log_half_binom_cdf_table(std::int64_t n) {
    std::vector<double> table(std::size_t(n) + 1);
    double run = kNegInf;
    for (std::int64_t t = 0; t <= n; ++t) {
        run = log_add(run, log_binom_pmf(t, n, 0.5));
        table[std::size_t(t)] = std::min(run, 0.0);
    }
    return table;
}

// Random-coding union bound with minimum-distance decoding:
//   eps <= sum_t P[Z1 = t] min{1, (M-1) P[Bin(n,1/2) <= t]},
// evaluated on the coupled error-count law.  log_m is log M in nats; any
// folded band mass is charged as error to keep the bound valid.
inline double rcu_epsilon(std::int64_t n, double log_m, double q1, double q2,
                          std::optional<int> band = std::nullopt) {
    if (n <= 0) throw OutOfRange("rcu_epsilon needs n >= 1");
    if (!std::isfinite(log_m) && log_m != kNegInf) throw OutOfRange("log_m must be finite");
    CoupledPmf cp = coupled_pmf(n, q1, q2, band);
    if (log_m <= 0.0) return std::min(cp.folded_mass, 1.0); // at most one message
    double log_m1 = log_m + std::log1p(-std::exp(-log_m));  // log(M-1)
    auto lc = log_half_binom_cdf_table(n);
    KahanSum acc;
    for (std::int64_t t = 0; t <= n; ++t) {
        double p = cp.z1_pmf[std::size_t(t)];
        if (p == 0.0) continue;
        double lu = log_m1 + lc[std::size_t(t)];
        acc.add(p * (lu >= 0.0 ? 1.0 : std::exp(lu)));
    }
    return std::min(acc.get() + cp.folded_mass, 1.0);
}

inline double rcu_epsilon_messages(std::int64_t n, std::uint64_t m, double q1, double q2,
                                   std::optional<int> band = std::nullopt) {
    if (m == 0) throw OutOfRange("need at least one message");
    return rcu_epsilon(n, m == 1 ? kNegInf : std::log(double(m)), q1, q2, band);
}

enum class RcuStatus { Ok, Saturated, NoFeasibleM };

struct RcuMaxLogM {
    RcuStatus status = RcuStatus::Ok;
    double logM_nats = 0.0;
};

// Largest message count with rcu_epsilon <= eps, via bisection in log M
// (monotone) plus exact integer refinement while M fits an integer.
inline RcuMaxLogM rcu_max_logM(std::int64_t n, double epsilon, double q1, double q2,
                               std::optional<int> band = std::nullopt) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw OutOfRange("epsilon in (0,1]");
    CoupledPmf cp = coupled_pmf(n, q1, q2, band);
    auto lc = log_half_binom_cdf_table(n);
    auto eps_of = [&](double log_m) {
        if (log_m <= 0.0) return std::min(cp.folded_mass, 1.0);
        double log_m1 = log_m + std::log1p(-std::exp(-log_m));
        KahanSum acc;
        for (std::int64_t t = 0; t <= n; ++t) {
            double p = cp.z1_pmf[std::size_t(t)];
            if (p == 0.0) continue;
            double lu = log_m1 + lc[std::size_t(t)];
            acc.add(p * (lu >= 0.0 ? 1.0 : std::exp(lu)));
        }
        return std::min(acc.get() + cp.folded_mass, 1.0);
    };

    RcuMaxLogM out;
    if (eps_of(0.0) > epsilon) {
        out.status = RcuStatus::NoFeasibleM;
        out.logM_nats = kNegInf;
        return out;
    }
    double cap = double(n) * std::log(2.0) + 60.0;
    if (eps_of(cap) <= epsilon) {
        out.status = RcuStatus::Saturated;
        out.logM_nats = cap;
        return out;
    }
    double lo = 0.0, hi = cap;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (eps_of(mid) <= epsilon) lo = mid;
        else hi = mid;
    }
    if (lo < 42.0) { // refine to the exact integer while exp() is trustworthy
        std::uint64_t m = std::uint64_t(std::floor(std::exp(lo) + 1e-9));
        m = std::max<std::uint64_t>(m, 1);
        while (eps_of(std::log(double(m + 1))) <= epsilon) ++m;
        while (m > 1 && eps_of(std::log(double(m))) > epsilon) --m;
        out.logM_nats = std::log(double(m));
    } else {
        out.logM_nats = lo;
    }
    return out;
}

// Helper error floor for signalling a block index through the same hardware:
// two union-bounded min-distance RCU terms for a BSC((q1+q2)/2) code with
// m_tilde messages over n_b uses.
inline double epsilon_star_parallel_bsc(std::int64_t n_b, double log_m_tilde, double q1, double q2) {
    if (n_b < 0) throw OutOfRange("epsilon_star needs n_b >= 0");
    if (log_m_tilde <= 0.0) return 0.0; // one message: nothing to confuse
    if (n_b == 0) return 1.0;
    double qbar = 0.5 * (q1 + q2);
    double log_m1 = log_m_tilde + std::log1p(-std::exp(-log_m_tilde));
    auto lc = log_half_binom_cdf_table(n_b);
    KahanSum acc;
    for (std::int64_t t = 0; t <= n_b; ++t) {
        double lp = log_binom_pmf(t, n_b, qbar);
        if (lp == kNegInf) continue;
        double lu = log_m1 + lc[std::size_t(t)];
        acc.add(std::exp(lp) * (lu >= 0.0 ? 1.0 : std::exp(lu)));
    }
    return std::min(2.0 * acc.get(), 1.0);
}

inline double epsilon_star_parallel_bsc_messages(std::int64_t n_b, std::uint64_t m_tilde,
                                                 double q1, double q2) {
    if (m_tilde == 0) throw OutOfRange("need at least one message");
    return epsilon_star_parallel_bsc(n_b, m_tilde == 1 ? kNegInf : std::log(double(m_tilde)), q1, q2);
}

} // namespace fbx
