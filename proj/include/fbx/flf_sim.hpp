#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fbx/antisym.hpp"
#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"
#include "fbx/parallel.hpp"
#include "fbx/rcu.hpp"
#include "fbx/rng.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Fixed-length feedback scheme over L data blocks of m symbols plus a
// confirmation stage of n_b = kappa * L symbols.  Each block transmits a
// constant-composition word whose type is chosen by a feedback rule among
// five candidates: the maximin input law perturbed up/down along v0, the
// maximin law itself, and the two single-decoder capacity achievers.
struct FlfSchemeParams {
    std::int64_t n = 0;        // requested blocklength (drives every formula)
    std::int64_t n_total = 0;  // L * m + n_b actually consumed
    int s = 5;                 // candidate types per block
    std::int64_t ell = 0;      // number of data blocks L
    std::int64_t m = 0;        // symbols per data block
    std::int64_t kappa = 0;    // confirmation symbols per block
    std::int64_t n_b = 0;      // confirmation stage length kappa * L
    double rho = 0.0;          // realized directional derivative of I1 at v0
    std::vector<double> v0;    // zero-sum perturbation direction, scaled

    std::array<std::vector<double>, 5> type_target;         // pre-rounding laws
    std::array<std::vector<std::int64_t>, 5> type_counts;   // m-type multiset
    std::array<std::vector<double>, 5> type_probs;          // counts / m

    double gamma = 0.0;      // density threshold the bound is anchored to
    double gamma1 = 0.0;     // final-block branch threshold
    double gamma2 = 0.0;     // secondary threshold (recorded, not branched on)
    double zeta = 0.0;       // change-of-measure slack exponent
    double tau_slack = 0.0;  // probability slack reserved out of epsilon

    double eta = 0.5;
    double capacity_c = 0.0;
    double v_weighted = 0.0;
    std::vector<double> p_star;
};

namespace detail {

// Largest integer cube root of n (avoids pow() edge error at perfect cubes).
inline std::int64_t icbrt(std::int64_t n) {
    if (n <= 0) return 0;
    auto r = static_cast<std::int64_t>(std::floor(std::cbrt(double(n))));
    while ((r + 1) * (r + 1) * (r + 1) <= n) ++r;
    while (r > 0 && r * r * r > n) --r;
    return r;
}

// Nearest m-type to `target` in Euclidean distance: floor the scaled entries,
// then hand the leftover counts to the largest fractional remainders.
inline std::vector<std::int64_t> round_to_type(const std::vector<double>& target, std::int64_t m) {
    const std::size_t k = target.size();
    std::vector<std::int64_t> counts(k, 0);
    std::vector<std::pair<double, std::size_t>> rem(k);
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        double scaled = target[i] * double(m);
        double fl = std::floor(scaled);
        counts[i] = static_cast<std::int64_t>(fl);
        assigned += counts[i];
        rem[i] = {scaled - fl, i};
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::int64_t leftover = m - assigned;
    for (std::int64_t j = 0; j < leftover; ++j) ++counts[rem[std::size_t(j)].second];
    return counts;
}

// First sign-corrected pair probe e_i - e_j on the support of p with a
// nonnegligible derivative of I1, scaled so the derivative equals rho.
inline std::vector<double> scaled_probe_direction(const BroadcastPair& pair,
                                                  const std::vector<double>& p_star, double rho,
                                                  double* realized) {
    const int nx = pair.num_inputs();
    std::vector<int> support;
    for (int x = 0; x < nx; ++x)
        if (p_star[std::size_t(x)] > 1e-12) support.push_back(x);
    std::vector<double> v0(std::size_t(nx), 0.0);
    *realized = 0.0;
    if (support.size() < 2) return v0;
    const int j = support.back();
    for (int i : support) {
        if (i == j) continue;
        std::vector<double> v(std::size_t(nx), 0.0);
        v[std::size_t(i)] = 1.0;
        v[std::size_t(j)] = -1.0;
        double d = directional_derivative(p_star, pair.w1, v);
        if (std::abs(d) > 1e-9) {
            double scale = rho / d;  // flips sign automatically when d < 0
            for (int x = 0; x < nx; ++x) v0[std::size_t(x)] = v[std::size_t(x)] * scale;
            *realized = rho;
            return v0;
        }
    }
    return v0;  // all probes flat: degenerate direction, perturbation off
}

}  // namespace detail

// Derives every scheme parameter from (n, epsilon) and the channel analysis.
// rho controls how aggressively the first two candidate types lean along v0.
inline FlfSchemeParams default_flf_params(std::int64_t n, double epsilon, const BroadcastPair& pair,
                                          const ChannelAnalysis& analysis, double rho = 1.0) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("default_flf_params needs epsilon in (0,1)");
    if (n < 8) throw BlocklengthTooSmall("default_flf_params needs n >= 8");
    FlfSchemeParams pr;
    pr.n = n;
    pr.eta = analysis.eta;
    pr.capacity_c = analysis.capacity_c;
    pr.v_weighted = analysis.v_weighted;
    pr.p_star = analysis.p_star;

    pr.ell = detail::icbrt(n);
    if (pr.ell < 2) throw BlocklengthTooSmall("need at least two data blocks");
    if (analysis.capacity_c <= 0.0) throw BlocklengthTooSmall("zero-capacity channel has no positive-rate scheme");
    pr.kappa = static_cast<std::int64_t>(std::floor(std::log(5.0) / analysis.capacity_c)) + 1;
    pr.m = n / pr.ell - pr.kappa;
    if (pr.m < 1) throw BlocklengthTooSmall("confirmation stage leaves no room for data blocks");
    pr.n_b = pr.kappa * pr.ell;
    pr.n_total = pr.ell * pr.m + pr.n_b;

    pr.v0 = detail::scaled_probe_direction(pair, analysis.p_star, rho, &pr.rho);

    const double delta = 1.0 / std::cbrt(double(n));
    const int nx = pair.num_inputs();
    auto perturbed = [&](double sign) {
        std::vector<double> t(static_cast<std::size_t>(nx));
        for (int x = 0; x < nx; ++x)
            t[std::size_t(x)] = analysis.p_star[std::size_t(x)] + sign * delta * pr.v0[std::size_t(x)];
        return t;
    };
    pr.type_target[0] = perturbed(+1.0);
    pr.type_target[1] = perturbed(-1.0);
    pr.type_target[2] = analysis.p_star;
    pr.type_target[3] = analysis.p_star_1;
    pr.type_target[4] = analysis.p_star_2;
    for (int b = 0; b < 5; ++b) {
        for (double& e : pr.type_target[std::size_t(b)]) {
            if (e < -1e-12)
                throw BlocklengthTooSmall("perturbed type leaves the simplex; raise n or lower rho");
            e = std::max(e, 0.0);
        }
        pr.type_counts[std::size_t(b)] = detail::round_to_type(pr.type_target[std::size_t(b)], pr.m);
        pr.type_probs[std::size_t(b)].resize(std::size_t(nx));
        for (int x = 0; x < nx; ++x)
            pr.type_probs[std::size_t(b)][std::size_t(x)] =
                double(pr.type_counts[std::size_t(b)][std::size_t(x)]) / double(pr.m);
    }

    pr.zeta = std::cbrt(double(n));
    pr.tau_slack = std::min(1.0 / std::sqrt(double(n)), epsilon / 2.0);

    const double lmc = double(pr.ell) * double(pr.m) * analysis.capacity_c;
    const double two_eps = 2.0 * epsilon;
    double gauss = 0.0;
    if (two_eps < 1.0)
        gauss = std::sqrt(double(pr.ell - 1) * double(pr.m) * analysis.v_weighted) * q_inv(two_eps);
    pr.gamma = lmc - gauss;
    pr.gamma1 = pr.gamma - double(pr.m) * analysis.capacity_c + std::cbrt(double(n)) * std::log(double(n));
    pr.gamma2 = double(pr.ell - 1) * double(pr.m) * analysis.capacity_c -
                std::sqrt(double(n)) * std::log(double(n));
    return pr;
}

// One simulated run of the scheme: per-block type choices and the two
// decoders' accumulated densities, plus the eta-weighted telescoped statistic
// measured against the maximin output law over the first L-1 blocks.
struct FlfTrialTranscript {
    std::vector<int> b_sequence;           // chosen type per block, 1-based
    std::vector<double> block_density1;    // per-block density increments, decoder 1
    std::vector<double> block_density2;
    double final_density1 = 0.0;
    double final_density2 = 0.0;
    double head_diff = 0.0;                // density1 - density2 after L-1 blocks
    double zstar_head = 0.0;               // weighted maximin-reference sum, blocks 1..L-1
};

namespace detail {

// Precomputed per-type log-density tables and channel rows for fast trials.
struct FlfTables {
    int nx = 0, ny1 = 0, ny2 = 0;
    // dens[b][k] indexed x * ny + y: log W_k(y|x) - log (P_b W_k)(y).
    std::array<std::array<std::vector<double>, 2>, 5> dens;
    std::array<std::vector<double>, 2> dens_star;  // same against P* W_k
    std::vector<std::vector<double>> rows1, rows2; // channel rows for sampling

    FlfTables(const FlfSchemeParams& pr, const BroadcastPair& pair) {
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
        auto build = [&](const std::vector<double>& ref, const Dmc& w,
                         const std::vector<std::int64_t>* counts) {
            auto out = output_dist(ref, w);
            std::vector<double> tab(std::size_t(w.num_inputs) * w.num_outputs, kNegInf);
            for (int x = 0; x < w.num_inputs; ++x)
                for (int y = 0; y < w.num_outputs; ++y) {
                    double wxy = w.at(x, y);
                    if (wxy <= 0.0) continue;  // never sampled from row x
                    if (out[std::size_t(y)] <= 0.0) {
                        if (counts == nullptr || (*counts)[std::size_t(x)] > 0)
                            throw DivergentDensity("type places mass on an input whose output escapes the reference law");
                        continue;
                    }
                    tab[std::size_t(x) * w.num_outputs + std::size_t(y)] =
                        std::log(wxy) - std::log(out[std::size_t(y)]);
                }
            return tab;
        };
        for (int b = 0; b < 5; ++b) {
            dens[std::size_t(b)][0] = build(pr.type_probs[std::size_t(b)], pair.w1,
                                            &pr.type_counts[std::size_t(b)]);
            dens[std::size_t(b)][1] = build(pr.type_probs[std::size_t(b)], pair.w2,
                                            &pr.type_counts[std::size_t(b)]);
        }
        dens_star[0] = build(pr.p_star, pair.w1, nullptr);
        dens_star[1] = build(pr.p_star, pair.w2, nullptr);
    }
};

inline FlfTrialTranscript run_flf_trial(const FlfSchemeParams& pr, const FlfTables& tb,
                                        RngStream& rng) {
    FlfTrialTranscript tr;
    tr.b_sequence.reserve(std::size_t(pr.ell));
    tr.block_density1.reserve(std::size_t(pr.ell));
    tr.block_density2.reserve(std::size_t(pr.ell));
    double s1 = 0.0, s2 = 0.0, zstar = 0.0;
    std::vector<int> inputs(std::size_t(pr.m));
    for (std::int64_t blk = 1; blk <= pr.ell; ++blk) {
        int b;
        if (blk == 1) {
            b = 2;
        } else if (blk < pr.ell) {
            b = (s1 >= s2) ? 2 : 1;
        } else {
            double weighted = pr.eta * s1 + (1.0 - pr.eta) * s2;
            if (weighted >= pr.gamma1)
                b = 3;
            else
                b = (rng.next_u64() & 1u) ? 5 : 4;
        }
        tr.b_sequence.push_back(b);
        const auto& counts = pr.type_counts[std::size_t(b - 1)];
        std::size_t pos = 0;
        for (int x = 0; x < tb.nx; ++x)
            for (std::int64_t c = 0; c < counts[std::size_t(x)]; ++c) inputs[pos++] = x;
        // Fisher-Yates over the composition multiset.
        for (std::size_t i = pos; i > 1; --i) {
            std::size_t j = std::size_t(rng.next_below(std::uint64_t(i)));
            std::swap(inputs[i - 1], inputs[j]);
        }
        const auto& d1 = tb.dens[std::size_t(b - 1)][0];
        const auto& d2 = tb.dens[std::size_t(b - 1)][1];
        double blk1 = 0.0, blk2 = 0.0, blkz = 0.0;
        for (std::size_t i = 0; i < pos; ++i) {
            int x = inputs[i];
            int y1 = rng.next_index(tb.rows1[std::size_t(x)]);
            int y2 = rng.next_index(tb.rows2[std::size_t(x)]);
            blk1 += d1[std::size_t(x) * tb.ny1 + std::size_t(y1)];
            blk2 += d2[std::size_t(x) * tb.ny2 + std::size_t(y2)];
            if (blk < pr.ell)
                blkz += pr.eta * tb.dens_star[0][std::size_t(x) * tb.ny1 + std::size_t(y1)] +
                        (1.0 - pr.eta) * tb.dens_star[1][std::size_t(x) * tb.ny2 + std::size_t(y2)];
        }
        tr.block_density1.push_back(blk1);
        tr.block_density2.push_back(blk2);
        s1 += blk1;
        s2 += blk2;
        if (blk == pr.ell - 1) tr.head_diff = s1 - s2;
        zstar += blkz;
    }
    tr.final_density1 = s1;
    tr.final_density2 = s2;
    tr.zstar_head = zstar;
    return tr;
}

}  // namespace detail

// Deterministic single trial: same (params, pair, seed) yields the same
// transcript bit for bit.
inline FlfTrialTranscript simulate_flf_trial(const FlfSchemeParams& params, const BroadcastPair& pair,
                                             std::uint64_t seed) {
    detail::FlfTables tables(params, pair);
    RngStream rng(seed, 0);
    return detail::run_flf_trial(params, tables, rng);
}

// Per-trial scalars from a batch of independent scheme runs.  Trial i always
// uses stream i of the master seed, so enlarging the batch extends rather
// than reshuffles it.
struct FlfBatch {
    std::uint64_t master_seed = 0;
    std::vector<double> final1, final2;    // accumulated densities at block L
    std::vector<double> head_diff;         // density gap after L-1 blocks
    std::vector<double> zstar_head;        // weighted maximin-reference sums
    std::vector<std::uint8_t> b_last;      // final-block type choice
};

inline FlfBatch run_flf_batch(const FlfSchemeParams& params, const BroadcastPair& pair,
                              std::uint64_t trials, std::uint64_t master_seed) {
    if (trials == 0) throw OutOfRange("run_flf_batch needs trials >= 1");
    detail::FlfTables tables(params, pair);
    FlfBatch batch;
    batch.master_seed = master_seed;
    batch.final1.resize(trials);
    batch.final2.resize(trials);
    batch.head_diff.resize(trials);
    batch.zstar_head.resize(trials);
    batch.b_last.resize(trials);
    parallel_for_index(trials, [&](std::uint64_t i) {
        RngStream rng(master_seed, i);
        auto tr = detail::run_flf_trial(params, tables, rng);
        batch.final1[i] = tr.final_density1;
        batch.final2[i] = tr.final_density2;
        batch.head_diff[i] = tr.head_diff;
        batch.zstar_head[i] = tr.zstar_head;
        batch.b_last[i] = std::uint8_t(tr.b_sequence.back());
    });
    return batch;
}

// Simulation-certified fixed-length achievable point.
struct FlfAchievablePoint {
    std::int64_t n = 0;             // requested blocklength
    std::int64_t n_total = 0;       // symbols actually consumed
    double logM_nats = 0.0;
    double eps_certified = 0.0;     // target epsilon plus confirmation-stage term
    double eps_target = 0.0;
    double eps_star = 0.0;          // confirmation-stage decoding error bound
    double gamma_selected = 0.0;    // certified density quantile
    double quantile_upper_ci = 0.0; // max over decoders of the CP upper bound there
    double threshold = 0.0;         // budget the CP bound had to beat
    double penalty_nats = 0.0;      // total rate penalty subtracted from gamma
    std::uint64_t trials = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t count_b3 = 0, count_b4 = 0, count_b5 = 0;
};

// Certifies the largest density threshold gamma such that both decoders'
// shortfall probabilities P[density_k < gamma], upper-bounded at confidence
// 1 - alpha, stay strictly below epsilon - tau - exp(-zeta).  The rate then
// pays the union, type-counting, and change-of-measure penalties.
inline FlfAchievablePoint certify_flf_point(const FlfSchemeParams& params, const BroadcastPair& pair,
                                            const FlfBatch& batch, double epsilon,
                                            std::optional<double> epsilon_star_override = std::nullopt,
                                            double alpha = 1e-3) {
    const std::uint64_t n_trials = batch.final1.size();
    if (n_trials < 10000) throw OutOfRange("certify_flf_point needs at least 10^4 trials");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("epsilon must lie in (0,1)");

    FlfAchievablePoint pt;
    pt.n = params.n;
    pt.n_total = params.n_total;
    pt.eps_target = epsilon;
    pt.trials = n_trials;
    pt.master_seed = batch.master_seed;
    for (std::uint8_t b : batch.b_last) {
        if (b == 3) ++pt.count_b3;
        else if (b == 4) ++pt.count_b4;
        else ++pt.count_b5;
    }

    pt.threshold = epsilon - params.tau_slack - std::exp(-params.zeta);
    if (pt.threshold <= 0.0)
        throw NoFeasibleGamma("epsilon leaves no probability budget after slack terms");

    auto stats = [](const std::vector<double>& v) {
        KahanSum s;
        for (double x : v) s.add(x);
        double mean = s.get() / double(v.size());
        KahanSum s2;
        for (double x : v) s2.add((x - mean) * (x - mean));
        double sd = std::sqrt(s2.get() / double(v.size()));
        return std::pair<double, double>(mean, sd);
    };
    auto [m1, sd1] = stats(batch.final1);
    auto [m2, sd2] = stats(batch.final2);
    double lo = std::min(m1 - 6.0 * sd1, m2 - 6.0 * sd2) - 1e-9;
    double hi = std::max(m1 + 6.0 * sd1, m2 + 6.0 * sd2) + 1e-9;

    std::vector<double> sorted1 = batch.final1, sorted2 = batch.final2;
    std::sort(sorted1.begin(), sorted1.end());
    std::sort(sorted2.begin(), sorted2.end());

    const int grid_points = 512;
    bool found = false;
    double best_gamma = 0.0, best_ci = 0.0;
    for (int g = grid_points - 1; g >= 0; --g) {
        double gamma = lo + (hi - lo) * double(g) / double(grid_points - 1);
        auto below = [&](const std::vector<double>& sorted) {
            return std::uint64_t(std::lower_bound(sorted.begin(), sorted.end(), gamma) -
                                 sorted.begin());
        };
        double ub1 = clopper_pearson_upper(below(sorted1), n_trials, alpha);
        double ub2 = clopper_pearson_upper(below(sorted2), n_trials, alpha);
        double ub = std::max(ub1, ub2);
        if (ub < pt.threshold) {
            best_gamma = gamma;
            best_ci = ub;
            found = true;
            break;
        }
    }
    if (!found)
        throw NoFeasibleGamma("no grid threshold certifies below the budget; raise trials or epsilon");
    pt.gamma_selected = best_gamma;
    pt.quantile_upper_ci = best_ci;

    const double nx = double(pair.num_inputs());
    pt.penalty_nats = -std::log(params.tau_slack / 2.0) +
                      double(params.s) * double(params.ell) * nx * std::log(1.0 + double(params.m)) +
                      double(params.ell) * std::log(double(params.s)) + params.zeta;
    pt.logM_nats = best_gamma - pt.penalty_nats;

    if (epsilon_star_override) {
        pt.eps_star = *epsilon_star_override;
    } else {
        auto qs = parallel_bsc_params(pair);
        if (!qs)
            throw WrongChannelFamily(
                "confirmation-stage error model is built in only for the parallel-BSC family; "
                "pass epsilon_star explicitly");
        double log_m_tilde = double(params.ell) * std::log(double(params.s));
        pt.eps_star = epsilon_star_parallel_bsc(params.n_b, log_m_tilde, qs->first, qs->second);
    }
    pt.eps_certified = epsilon + pt.eps_star;
    return pt;
}

// One-call wrapper: run the batch, then certify.
inline FlfAchievablePoint simulate_flf_point(const FlfSchemeParams& params, const BroadcastPair& pair,
                                             double epsilon, std::uint64_t trials,
                                             std::uint64_t master_seed,
                                             std::optional<double> epsilon_star_override = std::nullopt) {
    FlfBatch batch = run_flf_batch(params, pair, trials, master_seed);
    return certify_flf_point(params, pair, batch, epsilon, epsilon_star_override);
}

}  // namespace fbx
