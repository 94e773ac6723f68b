#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"
#include "fbx/increment_law.hpp"
#include "fbx/special.hpp"

namespace fbx {

enum class LambdaRule { LogN, Fixed, Grid };

struct ConverseQuery {
    std::int64_t n = 0;
    double epsilon = 0.0;
    LambdaRule lambda_rule = LambdaRule::LogN;
    double fixed_lambda = 0.0;
};

enum class BoundStatus { Ok, Vacuous };

struct ConverseResult {
    BoundStatus status = BoundStatus::Ok;
    double logM_nats = 0.0;       // +inf when vacuous
    double lambda_used = 0.0;
    SumMethod method = SumMethod::ExactFactor;
    double slack_nats = 0.0;      // value drift bound on the quantized route
};

// Fixed-length converse with full feedback: any code obeys
//   epsilon >= 1/2 P[S_n <= log M - lambda] - exp(-lambda),
// so the largest log M with 1/2 F(logM - lambda) - exp(-lambda) <= epsilon is
// an upper bound on the achievable log M.  Valid only for input-invariant
// weighted increment laws (the statistic is then encoder-free).
inline ConverseResult converse_logM(const IncrementLaw& law, const ConverseQuery& q) {
    if (!law.invariant)
        throw NotInvariant("converse_logM needs an input-invariant increment law");
    if (q.n <= 0) throw OutOfRange("converse_logM needs n >= 1");
    if (!(q.epsilon > 0.0 && q.epsilon < 1.0)) throw OutOfRange("epsilon in (0,1)");

    SumCdf cdf(law, q.n);
    std::vector<double> lambdas;
    double base = std::log(double(q.n));
    switch (q.lambda_rule) {
        case LambdaRule::LogN: lambdas = {base}; break;
        case LambdaRule::Fixed:
            if (!(q.fixed_lambda > 0.0)) throw OutOfRange("fixed lambda must be > 0");
            lambdas = {q.fixed_lambda};
            break;
        case LambdaRule::Grid:
            for (int j = -3; j <= 3; ++j) lambdas.push_back(base * std::pow(2.0, j));
            break;
    }

    ConverseResult best;
    best.status = BoundStatus::Vacuous;
    best.logM_nats = kPosInf;
    best.method = cdf.method();
    best.slack_nats = cdf.slack_nats();
    // Every admissible lambda yields a valid upper bound; report the tightest.
    bool any_finite = false;
    double best_val = kPosInf, best_lambda = lambdas.front();
    for (double lam : lambdas) {
        double beta = 2.0 * (q.epsilon + std::exp(-lam));
        if (beta >= 1.0) continue; // this lambda certifies nothing
        double log_beta = std::log(beta);
        double lo = cdf.min_value() - 1.0, hi = cdf.max_value() + 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-12 * (std::abs(hi) + 1.0); ++it) {
            double mid = 0.5 * (lo + hi);
            if (cdf.log_cdf(mid) <= log_beta) lo = mid;
            else hi = mid;
        }
        double cand = lo + lam;
        if (cand < best_val) {
            best_val = cand;
            best_lambda = lam;
        }
        any_finite = true;
    }
    if (!any_finite) return best; // vacuous at this epsilon for every lambda tried
    best.status = BoundStatus::Ok;
    best.logM_nats = best_val;
    best.lambda_used = best_lambda;
    return best;
}

// Second-moment converse: log M <= n C + sqrt(K n / (1 - 2(eps + 1/n))) + log n,
// with K the largest per-input variance of the weighted density.  Weaker than
// the exact evaluation but needs no convolution.
inline ConverseResult converse_chebyshev(const BroadcastPair& pair, const ChannelAnalysis& an,
                                         std::int64_t n, double epsilon) {
    if (n <= 0) throw OutOfRange("converse_chebyshev needs n >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("epsilon in (0,1)");
    auto pw1 = output_dist(an.p_star, pair.w1);
    auto pw2 = output_dist(an.p_star, pair.w2);
    double kmax = 0.0;
    for (int x = 0; x < pair.num_inputs(); ++x) {
        double vx = an.eta * an.eta * cond_var_given_x(pair.w1, pw1, x) +
                    (1.0 - an.eta) * (1.0 - an.eta) * cond_var_given_x(pair.w2, pw2, x);
        kmax = std::max(kmax, vx);
    }
    ConverseResult r;
    r.lambda_used = std::log(double(n));
    double denom = 1.0 - 2.0 * (epsilon + 1.0 / double(n));
    if (denom <= 0.0) {
        r.status = BoundStatus::Vacuous;
        r.logM_nats = kPosInf;
        return r;
    }
    r.status = BoundStatus::Ok;
    r.logM_nats = double(n) * an.capacity_c + std::sqrt(kmax * double(n) / denom) + std::log(double(n));
    return r;
}

// Second-order expansion n C - sqrt(n V) Q^{-1}(2 eps) with the feedback
// dispersion V = eta^2 V1 + (1-eta)^2 V2.
inline double normal_approx_feedback(const ChannelAnalysis& an, std::int64_t n, double epsilon) {
    if (n <= 0) throw OutOfRange("normal_approx_feedback needs n >= 1");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw OutOfRange("normal approximation needs epsilon in (0,1/2)");
    return double(n) * an.capacity_c - std::sqrt(double(n) * an.v_weighted) * q_inv(2.0 * epsilon);
}

} // namespace fbx
