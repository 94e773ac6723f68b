#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fbx/antisym.hpp"
#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"
#include "fbx/flf_sim.hpp"
#include "fbx/parallel.hpp"
#include "fbx/rcu.hpp"
#include "fbx/rng.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Converse for variable-length codes with feedback: any code with average
// length ell and error epsilon obeys log M <= (ell * C + h(epsilon)) / (1 - epsilon).
inline double vlf_converse_logM(double ell, double epsilon, double capacity_c) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw OutOfRange("vlf_converse_logM needs epsilon in [0,1)");
    if (!(ell >= 0.0)) throw OutOfRange("vlf_converse_logM needs ell >= 0");
    return (ell * capacity_c + binary_entropy_nats(epsilon)) / (1.0 - epsilon);
}

// Variable-length scheme: L balancing blocks of m symbols (types chosen by
// feedback), then transmission from the maximin law until each decoder's
// density crosses gamma (capped at tau_max), then an n_b-symbol confirmation
// stage.  The randomized-stop weight q mixes in immediate stops to trade
// error for expected length.
struct VlfParams {
    double ell_bar = 0.0;       // design average blocklength
    std::int64_t ell_blocks = 0;  // L
    std::int64_t m = 0;           // symbols per balancing block
    std::int64_t lm = 0;          // L * m
    std::int64_t kappa = 0;
    std::int64_t n_b = 0;         // confirmation stage length
    std::int64_t tau_max = 0;     // hard cap on the stopping timeline
    double gamma = 0.0;           // stopping threshold in nats
    double q = 0.0;               // randomized-stop mixture weight
    double logM_nats = 0.0;       // log floor(exp(gamma - log ell_bar))
    std::uint64_t m_codewords = 0;  // saturates at 2^64-1; logM_nats is authoritative
    double delta = 0.0;           // perturbation step ell_bar^{-1/3}
    double rho = 0.0;             // realized derivative of I1 along v0
    std::vector<double> v0;
    std::array<std::vector<std::int64_t>, 2> type_counts;  // balancing m-types
    std::array<std::vector<double>, 2> type_probs;
    double eta = 0.5;
    double capacity_c = 0.0;
    std::vector<double> p_star;
    bool balanced = true;         // false: alternate types, ignoring feedback
};

// Derives the scheme parameters from the design length.  The perturbation is
// scaled so the type entries stay at least half the smallest maximin entry,
// which keeps both balancing types inside the simplex at every ell_bar.
inline VlfParams default_vlf_params(double ell_bar, double epsilon, const BroadcastPair& pair,
                                    const ChannelAnalysis& analysis) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("default_vlf_params needs epsilon in (0,1)");
    if (!(ell_bar > 1.0)) throw BlocklengthTooSmall("ell_bar must exceed 1");
    if (analysis.capacity_c <= 0.0) throw BlocklengthTooSmall("zero-capacity channel has no positive-rate scheme");
    VlfParams pr;
    pr.ell_bar = ell_bar;
    pr.eta = analysis.eta;
    pr.capacity_c = analysis.capacity_c;
    pr.p_star = analysis.p_star;

    const double slack = std::sqrt(ell_bar) * std::log(ell_bar);
    const double x = ell_bar - slack;
    if (x < 8.0) throw BlocklengthTooSmall("ell_bar leaves no room for the balancing phase");
    std::int64_t big_l = static_cast<std::int64_t>(std::floor(std::cbrt(x)));
    while (double(big_l + 1) * double(big_l + 1) * double(big_l + 1) <= x) ++big_l;
    while (big_l > 1 && double(big_l) * double(big_l) * double(big_l) > x) --big_l;
    pr.ell_blocks = big_l;
    pr.m = static_cast<std::int64_t>(std::floor(x / double(big_l)));
    if (pr.ell_blocks < 1 || pr.m < 1) throw BlocklengthTooSmall("balancing phase degenerates");
    pr.lm = pr.ell_blocks * pr.m;
    pr.kappa = static_cast<std::int64_t>(std::floor(std::log(2.0) / analysis.capacity_c)) + 1;
    pr.n_b = pr.kappa * pr.ell_blocks;
    pr.tau_max = static_cast<std::int64_t>(std::floor(ell_bar + slack));
    if (pr.tau_max <= pr.lm) throw BlocklengthTooSmall("stopping cap does not exceed the balancing phase");

    pr.gamma = analysis.capacity_c * ell_bar - 2.0 * std::cbrt(ell_bar) * std::log(ell_bar);
    if (pr.gamma < 0.0) throw BlocklengthTooSmall("stopping threshold is negative at this ell_bar");
    pr.logM_nats = pr.gamma - std::log(ell_bar);
    if (pr.logM_nats < std::log(2.0)) throw BlocklengthTooSmall("fewer than two messages fit");
    double m_real = std::floor(std::exp(pr.logM_nats));
    pr.m_codewords = m_real >= double(std::numeric_limits<std::uint64_t>::max())
                         ? std::numeric_limits<std::uint64_t>::max()
                         : static_cast<std::uint64_t>(m_real);

    pr.delta = 1.0 / std::cbrt(ell_bar);
    double d_raw = 0.0;
    std::vector<double> probe = detail::scaled_probe_direction(pair, analysis.p_star, 1.0, &d_raw);
    // probe now has derivative 1 along I1; rescale so the perturbation stays
    // inside the simplex with margin 1/2.
    double max_abs = 0.0, min_supp = 1.0;
    for (double e : probe) max_abs = std::max(max_abs, std::abs(e));
    for (double e : analysis.p_star)
        if (e > 1e-12) min_supp = std::min(min_supp, e);
    pr.v0.assign(analysis.p_star.size(), 0.0);
    pr.rho = 0.0;
    if (d_raw != 0.0 && max_abs > 0.0) {
        double scale = 0.5 * min_supp / (max_abs * pr.delta);
        for (std::size_t i = 0; i < probe.size(); ++i) pr.v0[i] = probe[i] * scale;
        pr.rho = scale;  // derivative of I1 along v0 (probe had derivative 1)
    }

    const int nx = pair.num_inputs();
    for (int b = 0; b < 2; ++b) {
        double sign = (b == 0) ? +1.0 : -1.0;
        std::vector<double> target(static_cast<std::size_t>(nx));
        for (int i = 0; i < nx; ++i)
            target[std::size_t(i)] =
                std::max(0.0, analysis.p_star[std::size_t(i)] + sign * pr.delta * pr.v0[std::size_t(i)]);
        pr.type_counts[std::size_t(b)] = detail::round_to_type(target, pr.m);
        pr.type_probs[std::size_t(b)].resize(std::size_t(nx));
        for (int i = 0; i < nx; ++i)
            pr.type_probs[std::size_t(b)][std::size_t(i)] =
                double(pr.type_counts[std::size_t(b)][std::size_t(i)]) / double(pr.m);
    }
    return pr;
}

// Confirmation-stage error bound for the built-in family: the confirmation
// stage must distinguish the 2^L balancing histories.
inline double vlf_epsilon_star(const VlfParams& params, const BroadcastPair& pair) {
    auto qs = parallel_bsc_params(pair);
    if (!qs)
        throw WrongChannelFamily(
            "confirmation-stage error model is built in only for the parallel-BSC family; "
            "pass epsilon_star explicitly");
    double log_m_tilde = double(params.ell_blocks) * std::log(2.0);
    return epsilon_star_parallel_bsc(params.n_b, log_m_tilde, qs->first, qs->second);
}

// Grows n_b until the confirmation-stage error drops below epsilon / 4.  The
// minimal kappa * L confirmation stage certifies nothing at desk scale.
inline VlfParams calibrate_nb(VlfParams params, const BroadcastPair& pair, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("calibrate_nb needs epsilon in (0,1)");
    const double target = epsilon / 4.0;
    for (std::int64_t nb = params.n_b; nb <= params.n_b + 1000000; ++nb) {
        params.n_b = nb;
        if (vlf_epsilon_star(params, pair) <= target) return params;
    }
    throw NonConvergence("confirmation stage cannot reach epsilon/4 within 10^6 symbols");
}

// Monte Carlo estimates of the stopping behavior of the true-message density
// processes.
struct StoppingStats {
    std::uint64_t trials = 0;
    std::uint64_t master_seed = 0;
    std::int64_t lm = 0;
    std::int64_t tau_max = 0;
    double e_max_tau = 0.0;            // estimate of E[max_k tau_k]
    double e_max_tau_halfwidth = 0.0;  // empirical-Bernstein 99% halfwidth
    double e_max_tau_upper = 0.0;      // clamped to tau_max
    double e_min_tau = 0.0;
    std::array<double, 2> p_tau_max{};        // per-decoder cap-hit estimates
    std::array<double, 2> p_tau_max_upper{};  // Clopper-Pearson 99% upper
    double head_gap_mean = 0.0;  // E |S1 - S2| at the end of the balancing phase
    double head_gap_p99 = 0.0;   // empirical 99th percentile of the same gap
    bool coupled = false;
    std::array<double, 2> p_overtake{};        // P[competing crosses by tau_k]
    std::array<double, 2> p_overtake_upper{};
};

namespace detail {

struct VlfTables {
    int nx = 0, ny1 = 0, ny2 = 0;
    std::array<std::array<std::vector<double>, 2>, 2> dens;  // [type][decoder]
    std::array<std::vector<double>, 2> dens_star;
    std::vector<std::vector<double>> rows1, rows2;

    VlfTables(const VlfParams& pr, const BroadcastPair& pair) {
        nx = pair.num_inputs();
        ny1 = pair.w1.num_outputs;
        ny2 = pair.w2.num_outputs;
        rows1.resize(std::size_t(nx));
        rows2.resize(std::size_t(nx));
        for (int x = 0; x < nx; ++x) {
            rows1[std::size_t(x)].resize(std::size_t(ny1));
            rows2[std::size_t(x)].resize(std::size_t(ny2));
            for (int y = 0; y < ny1; ++y) rows1[std::size_t(x)][std::size_t(y)] = pair.w1.at(x, y);
            for (int y = 0; y < ny2; ++y) rows2[std::size_t(x)][std::size_t(y)] = pair.w2.at(x, y);
        }
        auto build = [&](const std::vector<double>& ref, const Dmc& w) {
            auto out = output_dist(ref, w);
            std::vector<double> tab(std::size_t(w.num_inputs) * w.num_outputs, kNegInf);
            for (int x = 0; x < w.num_inputs; ++x)
                for (int y = 0; y < w.num_outputs; ++y) {
                    double wxy = w.at(x, y);
                    if (wxy <= 0.0) continue;
                    if (out[std::size_t(y)] <= 0.0) {
                        if (ref[std::size_t(x)] > 0.0)
                            throw DivergentDensity("sampled input reaches an output the reference law misses");
                        continue;
                    }
                    tab[std::size_t(x) * w.num_outputs + std::size_t(y)] =
                        std::log(wxy) - std::log(out[std::size_t(y)]);
                }
            return tab;
        };
        for (int b = 0; b < 2; ++b) {
            dens[std::size_t(b)][0] = build(pr.type_probs[std::size_t(b)], pair.w1);
            dens[std::size_t(b)][1] = build(pr.type_probs[std::size_t(b)], pair.w2);
        }
        dens_star[0] = build(pr.p_star, pair.w1);
        dens_star[1] = build(pr.p_star, pair.w2);
    }
};

struct VlfTrial {
    std::int64_t tau1 = 0, tau2 = 0;
    bool hit_cap1 = false, hit_cap2 = false;
    double head_gap = 0.0;
    bool overtake1 = false, overtake2 = false;
};

inline VlfTrial run_vlf_trial(const VlfParams& pr, const VlfTables& tb, RngStream& rng,
                              bool coupled) {
    VlfTrial tr;
    double s1 = 0.0, s2 = 0.0;
    double c1 = 0.0, c2 = 0.0;  // competing-codeword densities (coupled mode)
    for (std::int64_t blk = 1; blk <= pr.ell_blocks; ++blk) {
        int b;
        if (pr.balanced)
            b = (blk == 1) ? 2 : ((s1 >= s2) ? 2 : 1);
        else
            b = 1 + int(blk & 1);  // alternate 2,1,2,1,... ignoring feedback
        const auto& probs = pr.type_probs[std::size_t(b - 1)];
        const auto& d1 = tb.dens[std::size_t(b - 1)][0];
        const auto& d2 = tb.dens[std::size_t(b - 1)][1];
        for (std::int64_t i = 0; i < pr.m; ++i) {
            int x = rng.next_index(probs);
            int y1 = rng.next_index(tb.rows1[std::size_t(x)]);
            int y2 = rng.next_index(tb.rows2[std::size_t(x)]);
            s1 += d1[std::size_t(x) * tb.ny1 + std::size_t(y1)];
            s2 += d2[std::size_t(x) * tb.ny2 + std::size_t(y2)];
            if (coupled) {
                int xb = rng.next_index(probs);
                c1 += d1[std::size_t(xb) * tb.ny1 + std::size_t(y1)];
                c2 += d2[std::size_t(xb) * tb.ny2 + std::size_t(y2)];
            }
        }
    }
    tr.head_gap = std::abs(s1 - s2);

    bool st1 = s1 >= pr.gamma, st2 = s2 >= pr.gamma;
    bool ov1 = coupled && c1 >= pr.gamma, ov2 = coupled && c2 >= pr.gamma;
    tr.tau1 = tr.tau2 = pr.lm;
    for (std::int64_t n = pr.lm + 1; n <= pr.tau_max && !(st1 && st2); ++n) {
        int x = rng.next_index(pr.p_star);
        if (!st1) {
            int y1 = rng.next_index(tb.rows1[std::size_t(x)]);
            s1 += tb.dens_star[0][std::size_t(x) * tb.ny1 + std::size_t(y1)];
            if (coupled && !ov1) {
                int xb = rng.next_index(pr.p_star);
                c1 += tb.dens_star[0][std::size_t(xb) * tb.ny1 + std::size_t(y1)];
                ov1 = c1 >= pr.gamma;
            }
            if (s1 >= pr.gamma) st1 = true;
            tr.tau1 = n;
        }
        if (!st2) {
            int y2 = rng.next_index(tb.rows2[std::size_t(x)]);
            s2 += tb.dens_star[1][std::size_t(x) * tb.ny2 + std::size_t(y2)];
            if (coupled && !ov2) {
                int xb = rng.next_index(pr.p_star);
                c2 += tb.dens_star[1][std::size_t(xb) * tb.ny2 + std::size_t(y2)];
                ov2 = c2 >= pr.gamma;
            }
            if (s2 >= pr.gamma) st2 = true;
            tr.tau2 = n;
        }
    }
    tr.hit_cap1 = !st1 || tr.tau1 == pr.tau_max;
    tr.hit_cap2 = !st2 || tr.tau2 == pr.tau_max;
    if (!st1) tr.tau1 = pr.tau_max;
    if (!st2) tr.tau2 = pr.tau_max;
    tr.overtake1 = ov1;
    tr.overtake2 = ov2;
    return tr;
}

}  // namespace detail

// Runs `trials` independent scheme executions; trial i uses stream i of the
// master seed.  CIs are 99%: Clopper-Pearson for probabilities and
// empirical-Bernstein for E[max tau] (support is bounded by tau_max).
inline StoppingStats simulate_vlf(const VlfParams& params, const BroadcastPair& pair,
                                  std::uint64_t trials, std::uint64_t master_seed,
                                  bool coupled = false) {
    if (trials == 0) throw OutOfRange("simulate_vlf needs trials >= 1");
    detail::VlfTables tables(params, pair);
    std::vector<double> max_tau(trials), min_tau(trials), head_gap(trials);
    std::vector<std::uint8_t> cap1(trials), cap2(trials), ov1(trials), ov2(trials);
    parallel_for_index(trials, [&](std::uint64_t i) {
        RngStream rng(master_seed, i);
        auto tr = detail::run_vlf_trial(params, tables, rng, coupled);
        max_tau[i] = double(std::max(tr.tau1, tr.tau2));
        min_tau[i] = double(std::min(tr.tau1, tr.tau2));
        head_gap[i] = tr.head_gap;
        cap1[i] = tr.hit_cap1 ? 1 : 0;
        cap2[i] = tr.hit_cap2 ? 1 : 0;
        ov1[i] = tr.overtake1 ? 1 : 0;
        ov2[i] = tr.overtake2 ? 1 : 0;
    });

    StoppingStats st;
    st.trials = trials;
    st.master_seed = master_seed;
    st.lm = params.lm;
    st.tau_max = params.tau_max;
    st.coupled = coupled;

    auto mean_of = [&](const std::vector<double>& v) {
        KahanSum s;
        for (double x : v) s.add(x);
        return s.get() / double(v.size());
    };
    st.e_max_tau = mean_of(max_tau);
    st.e_min_tau = mean_of(min_tau);
    KahanSum var_acc;
    for (double x : max_tau) var_acc.add((x - st.e_max_tau) * (x - st.e_max_tau));
    double sample_var = trials > 1 ? var_acc.get() / double(trials - 1) : 0.0;
    st.e_max_tau_halfwidth = empirical_bernstein_halfwidth(
        sample_var, double(params.tau_max - params.lm), trials, 0.01);
    st.e_max_tau_upper = std::min(st.e_max_tau + st.e_max_tau_halfwidth, double(params.tau_max));

    auto count_of = [&](const std::vector<std::uint8_t>& v) {
        std::uint64_t c = 0;
        for (auto b : v) c += b;
        return c;
    };
    std::uint64_t c1 = count_of(cap1), c2 = count_of(cap2);
    st.p_tau_max = {double(c1) / double(trials), double(c2) / double(trials)};
    st.p_tau_max_upper = {clopper_pearson_upper(c1, trials, 0.01),
                          clopper_pearson_upper(c2, trials, 0.01)};

    st.head_gap_mean = mean_of(head_gap);
    std::vector<double> sorted_gap = head_gap;
    std::sort(sorted_gap.begin(), sorted_gap.end());
    st.head_gap_p99 = sorted_gap[std::size_t(std::min<double>(
        double(trials - 1), std::floor(0.99 * double(trials))))];

    if (coupled) {
        std::uint64_t o1 = count_of(ov1), o2 = count_of(ov2);
        st.p_overtake = {double(o1) / double(trials), double(o2) / double(trials)};
        st.p_overtake_upper = {clopper_pearson_upper(o1, trials, 0.01),
                               clopper_pearson_upper(o2, trials, 0.01)};
    }
    return st;
}

// Expected-length side of the randomized-stop mixture.
inline double vlf_expected_length(double q, double e_max_tau_upper, std::int64_t n_b) {
    return (1.0 - q) * (e_max_tau_upper + double(n_b));
}

struct VlfAchievablePoint {
    double ell_achieved = 0.0;
    double logM_nats = 0.0;
    double eps_certified = 0.0;
    double q = 0.0;
    double eps_star = 0.0;
    double term_codebook = 0.0;   // exp(logM - gamma), the union-bound term
    double term_tau_upper = 0.0;  // max_k CP-upper of P[tau_k = tau_max]
};

// Certifies a (length, rate, error) point: picks the largest q with
// q + (1-q) * (eps_star + exp(logM - gamma) + term_tau) <= epsilon, then
// charges the confirmation stage to the expected length.
inline VlfAchievablePoint vlf_achievable_point(const VlfParams& params, const BroadcastPair& pair,
                                               const StoppingStats& stats, double epsilon,
                                               std::optional<double> epsilon_star_override = std::nullopt) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("epsilon must lie in (0,1)");
    VlfAchievablePoint pt;
    pt.logM_nats = params.logM_nats;
    pt.eps_star = epsilon_star_override ? *epsilon_star_override : vlf_epsilon_star(params, pair);
    pt.term_codebook = std::exp(params.logM_nats - params.gamma);
    pt.term_tau_upper = std::max(stats.p_tau_max_upper[0], stats.p_tau_max_upper[1]);
    double budget = pt.eps_star + pt.term_codebook + pt.term_tau_upper;
    if (budget > epsilon)
        throw InfeasibleEpsilon("error budget exceeds epsilon even with q = 0");
    pt.q = (epsilon - budget) / (1.0 - budget);
    pt.q = std::clamp(pt.q, 0.0, 1.0);
    pt.eps_certified = pt.q + (1.0 - pt.q) * budget;
    pt.ell_achieved = vlf_expected_length(pt.q, stats.e_max_tau_upper, params.n_b);
    return pt;
}

}  // namespace fbx
