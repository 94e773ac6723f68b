#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fbx/channel.hpp"
#include "fbx/errors.hpp"
#include "fbx/rng.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Full single-point description of a broadcast pair at its maximin input law.
struct ChannelAnalysis {
    InputDist p_star;            // argmax of min_k I_k
    double capacity_c = 0.0;     // min_k I_k(p_star), nats
    double c1 = 0.0, c2 = 0.0;   // per-decoder capacities
    InputDist p_star_1, p_star_2; // per-decoder capacity-achieving laws
    double v1 = 0.0, v2 = 0.0;   // conditional information variances at p_star
    double eta = 0.5;            // tilting weight from the derivative identity
    bool eta_degenerate = false; // true when no probe direction separates the decoders
    double v_weighted = 0.0;     // eta^2 v1 + (1-eta)^2 v2
    bool variance_flat = false; // per-input weighted variance constant
    double variance_flat_tol = 1e-9;
    double variance_flat_max_dev = 0.0;
    double duality_gap = 0.0;    // certified optimality slack of p_star, nats
    std::vector<std::string> assumption_report; // non-fatal regularity violations
};

namespace detail {

inline std::vector<double> divergence_rows(const InputDist& p, const Dmc& w) {
    auto pw = output_dist(p, w);
    std::vector<double> d(w.num_inputs);
    for (int x = 0; x < w.num_inputs; ++x) d[x] = divergence_to_output(w, pw, x);
    return d;
}

// Alternating-maximization step for J_w(P) = w I_1(P) + (1-w) I_2(P):
// P'(x) proportional to P(x) exp(w D_1(x) + (1-w) D_2(x)).
inline InputDist weighted_ascent(const BroadcastPair& pair, double w, InputDist p,
                                 int max_iter, double move_tol) {
    const int nx = pair.num_inputs();
    for (int it = 0; it < max_iter; ++it) {
        auto d1 = divergence_rows(p, pair.w1);
        auto d2 = divergence_rows(p, pair.w2);
        double cmax = kNegInf;
        std::vector<double> c(nx, kNegInf);
        for (int x = 0; x < nx; ++x) {
            if (p[x] <= 0.0) continue;
            c[x] = w * d1[x] + (1.0 - w) * d2[x];
            cmax = std::max(cmax, c[x]);
        }
        KahanSum z;
        InputDist next(nx, 0.0);
        for (int x = 0; x < nx; ++x) {
            if (p[x] <= 0.0) continue;
            next[x] = p[x] * std::exp(c[x] - cmax);
            z.add(next[x]);
        }
        double move = 0.0;
        for (int x = 0; x < nx; ++x) {
            next[x] /= z.get();
            move = std::max(move, std::abs(next[x] - p[x]));
        }
        p = std::move(next);
        if (move < move_tol) break;
    }
    return p;
}

// Exact minimum over weights of the dual cap max_x [w D1(x) + (1-w) D2(x)].
// One-dimensional lower envelope of lines: candidate minima are the segment
// endpoints and pairwise crossings.
inline double dual_upper_bound(const std::vector<double>& d1, const std::vector<double>& d2) {
    const int nx = int(d1.size());
    auto cap_at = [&](double w) {
        double m = kNegInf;
        for (int x = 0; x < nx; ++x) m = std::max(m, w * d1[x] + (1.0 - w) * d2[x]);
        return m;
    };
    double best = std::min(cap_at(0.0), cap_at(1.0));
    for (int a = 0; a < nx; ++a)
        for (int b = a + 1; b < nx; ++b) {
            double den = (d1[a] - d2[a]) - (d1[b] - d2[b]);
            if (den == 0.0) continue;
            double w = (d2[b] - d2[a]) / den;
            if (w > 0.0 && w < 1.0) best = std::min(best, cap_at(w));
        }
    return best;
}

} // namespace detail

// Capacity-achieving law of a single channel (w = 1 corner of the weighted
// ascent), with its certified gap returned via out-parameter.
inline InputDist single_caid(const Dmc& w, double* capacity = nullptr, double* gap = nullptr,
                             int max_iter = 60000) {
    BroadcastPair self{w, w};
    InputDist p(w.num_inputs, 1.0 / w.num_inputs);
    p = detail::weighted_ascent(self, 1.0, p, max_iter, 1e-15);
    double cap = mutual_information(p, w);
    auto d = detail::divergence_rows(p, w);
    double u = *std::max_element(d.begin(), d.end());
    if (capacity) *capacity = cap;
    if (gap) *gap = u - cap;
    return p;
}

// Tilting weight eta from the first-order identity eta*dI1(v) + (1-eta)*dI2(v) = 0.
// Probes canonical directions e_x - e_last first, then a fixed seeded batch of
// random zero-sum directions.
inline double compute_eta(const BroadcastPair& pair, const InputDist& p_star,
                          double derivative_floor = 1e-9) {
    const int nx = pair.num_inputs();
    auto d1 = detail::divergence_rows(p_star, pair.w1);
    auto d2 = detail::divergence_rows(p_star, pair.w2);
    auto eta_from = [&](double g1, double g2) -> double {
        double den = g2 - g1;
        if (den == 0.0) throw DegenerateDerivatives("equal derivatives along probe");
        double eta = g2 / den;
        if (!(eta > 0.0 && eta < 1.0))
            throw DegenerateDerivatives("derivative signs inconsistent with an optimal input law (eta outside (0,1))");
        return eta;
    };
    for (int x = 0; x + 1 < nx; ++x) {
        double g1 = d1[x] - d1[nx - 1];
        double g2 = d2[x] - d2[nx - 1];
        if (std::abs(g1) > derivative_floor && std::abs(g2 - g1) > derivative_floor)
            return eta_from(g1, g2);
    }
    RngStream rng(0x5EEDC0FFEEULL, 7);
    for (int t = 0; t < 20; ++t) {
        DirectionVector v(nx);
        KahanSum mean;
        for (int x = 0; x < nx; ++x) {
            v[x] = rng.next_gaussian();
            mean.add(v[x]);
        }
        double g1 = 0.0, g2 = 0.0;
        for (int x = 0; x < nx; ++x) {
            v[x] -= mean.get() / nx;
            g1 += v[x] * d1[x];
            g2 += v[x] * d2[x];
        }
        if (std::abs(g1) > derivative_floor && std::abs(g2 - g1) > derivative_floor)
            return eta_from(g1, g2);
    }
    throw DegenerateDerivatives("no probe direction separates the decoders");
}

// Maximin input law: outer bisection on the decoder weight, inner weighted
// alternating ascent, plus the exact dual cap as an optimality certificate.
// Termination matches the duality-surrogate criterion: certified gap < tol.
inline ChannelAnalysis solve_caid(const BroadcastPair& pair, double tol = 1e-9,
                                  int max_iter = 60000) {
    pair.validate();
    const int nx = pair.num_inputs();
    ChannelAnalysis an;
    an.variance_flat_tol = 1e-9;

    double gap1 = 0.0, gap2 = 0.0;
    an.p_star_1 = single_caid(pair.w1, &an.c1, &gap1, max_iter);
    an.p_star_2 = single_caid(pair.w2, &an.c2, &gap2, max_iter);

    double i2_at_1 = mutual_information(an.p_star_1, pair.w2);
    double i1_at_2 = mutual_information(an.p_star_2, pair.w1);
    if (i2_at_1 >= an.c1 - 1e-12) {
        an.p_star = an.p_star_1; // decoder 1 is the bottleneck everywhere
    } else if (i1_at_2 >= an.c2 - 1e-12) {
        an.p_star = an.p_star_2;
    } else {
        // Equalized interior solution: bisect on the decoder weight until
        // I_1 = I_2.  Each inner ascent restarts from uniform: the
        // multiplicative update cannot revive an entry it has driven to zero,
        // so reusing the previous iterate as a warm start poisons later
        // weights.  Keep the best candidate by maximin value.
        const InputDist uniform(nx, 1.0 / nx);
        auto maximin_value = [&](const InputDist& p) {
            return std::min(mutual_information(p, pair.w1), mutual_information(p, pair.w2));
        };
        InputDist best = uniform;
        double best_v = maximin_value(best);
        auto consider = [&](const InputDist& p) {
            double v = maximin_value(p);
            if (v > best_v) {
                best_v = v;
                best = p;
            }
        };
        consider(an.p_star_1);
        consider(an.p_star_2);
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 70; ++it) {
            double mid = 0.5 * (lo + hi);
            InputDist pw = detail::weighted_ascent(pair, mid, uniform, max_iter, 1e-15);
            consider(pw);
            double g = mutual_information(pw, pair.w1) - mutual_information(pw, pair.w2);
            if (g > 0.0) hi = mid;
            else lo = mid;
        }
        an.p_star = best;
    }

    double i1 = mutual_information(an.p_star, pair.w1);
    double i2 = mutual_information(an.p_star, pair.w2);
    an.capacity_c = std::min(i1, i2);
    {
        auto d1 = detail::divergence_rows(an.p_star, pair.w1);
        auto d2 = detail::divergence_rows(an.p_star, pair.w2);
        an.duality_gap = detail::dual_upper_bound(d1, d2) - an.capacity_c;
    }
    if (!(an.duality_gap < tol))
        throw NonConvergence("maximin solver certified gap " + std::to_string(an.duality_gap) +
                             " exceeds tol " + std::to_string(tol));

    an.v1 = cond_info_variance(an.p_star, pair.w1);
    an.v2 = cond_info_variance(an.p_star, pair.w2);

    for (int x = 0; x < nx; ++x)
        if (an.p_star[x] <= 1e-12) {
            an.assumption_report.push_back("p_star has a zero entry at x=" + std::to_string(x));
            break;
        }
    if (an.v1 <= 1e-14) an.assumption_report.push_back("V_1(p_star) = 0");
    if (an.v2 <= 1e-14) an.assumption_report.push_back("V_2(p_star) = 0");
    if (an.c1 - an.capacity_c <= 1e-9) an.assumption_report.push_back("C_1 = C (no slack at decoder 1)");
    if (an.c2 - an.capacity_c <= 1e-9) an.assumption_report.push_back("C_2 = C (no slack at decoder 2)");

    try {
        an.eta = compute_eta(pair, an.p_star);
    } catch (const DegenerateDerivatives&) {
        an.eta = 0.5;
        an.eta_degenerate = true;
        an.assumption_report.push_back("derivative identity degenerate; eta fixed at 1/2");
    }
    an.v_weighted = an.eta * an.eta * an.v1 + (1.0 - an.eta) * (1.0 - an.eta) * an.v2;

    // Per-input weighted variance must be flat for the dispersion claim.
    auto pw1 = output_dist(an.p_star, pair.w1);
    auto pw2 = output_dist(an.p_star, pair.w2);
    double maxdev = 0.0;
    for (int x = 0; x < nx; ++x) {
        double vx = an.eta * an.eta * cond_var_given_x(pair.w1, pw1, x) +
                    (1.0 - an.eta) * (1.0 - an.eta) * cond_var_given_x(pair.w2, pw2, x);
        maxdev = std::max(maxdev, std::abs(vx - an.v_weighted));
    }
    an.variance_flat_max_dev = maxdev;
    an.variance_flat = maxdev <= an.variance_flat_tol;
    return an;
}

inline ChannelAnalysis analyze(const BroadcastPair& pair, double tol = 1e-9) {
    return solve_caid(pair, tol);
}

} // namespace fbx
