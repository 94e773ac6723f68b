#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fbx/errors.hpp"
#include "fbx/parallel.hpp"
#include "fbx/rng.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Bounded increment sampler with a known mean and an analytically certified
// subgaussian tail P[|X - mu| > t] <= 2 exp(-beta t^2).
struct IncrementSampler {
    enum class Kind { PointMass, TruncatedGaussian };
    Kind kind = Kind::PointMass;
    double mu = 0.0;     // mean
    double sigma = 0.0;  // scale of the Gaussian part
    double trunc = 6.0;  // truncation in sigma units (symmetric, so the mean survives)

    double sample(RngStream& rng) const {
        if (kind == Kind::PointMass) return mu;
        double g;
        do {
            g = rng.next_gaussian();
        } while (std::abs(g) > trunc);
        return mu + sigma * g;
    }
};

// Two-sided stabilization process: while the state is negative the
// positive-mean increment is applied, otherwise the negative-mean one.  The
// tail bound 2 exp(-c sqrt(beta) (v - mu1 + mu2)) holds whenever
// min(mu1, -mu2) >= sqrt(pi / beta) * exp(c^2 / 4).
struct StabilizationSpec {
    double mu1 = 0.0;   // mean of sampler1, > 0
    double mu2 = 0.0;   // mean of sampler2, < 0
    double beta = 0.0;  // subgaussian parameter of both samplers
    double c = 1.0;     // tail constant, >= 1
    IncrementSampler sampler1, sampler2;

    void validate() const {
        if (!(mu1 > 0.0) || !(mu2 < 0.0)) throw SpecViolation("need mu1 > 0 > mu2");
        if (!(beta > 0.0)) throw SpecViolation("need beta > 0");
        if (!(c >= 1.0)) throw SpecViolation("need c >= 1");
        if (std::abs(sampler1.mu - mu1) > 1e-12 || std::abs(sampler2.mu - mu2) > 1e-12)
            throw SpecViolation("sampler means disagree with declared mu1/mu2");
        double must_exceed = std::sqrt(kPi / beta) * std::exp(c * c / 4.0);
        if (std::min(mu1, -mu2) < must_exceed)
            throw SpecViolation("drift condition fails: min(mu1,-mu2) below sqrt(pi/beta) e^{c^2/4}");
    }

    double tail_bound(double v) const {
        return 2.0 * std::exp(-c * std::sqrt(beta) * (v - mu1 + mu2));
    }
};

// Deterministic +/- drift increments; any beta meeting the drift condition is
// valid because point masses have no tail at all.
inline StabilizationSpec make_point_mass_spec(double mu1, double mu2, double beta, double c = 1.0) {
    StabilizationSpec spec;
    spec.mu1 = mu1;
    spec.mu2 = mu2;
    spec.beta = beta;
    spec.c = c;
    spec.sampler1 = {IncrementSampler::Kind::PointMass, mu1, 0.0, 0.0};
    spec.sampler2 = {IncrementSampler::Kind::PointMass, mu2, 0.0, 0.0};
    spec.validate();
    return spec;
}

// Symmetric truncated Gaussians shifted to +/- mu_scale * sigma.  Truncation
// only thins tails, so beta = 1 / (2 sigma^2) certifies the subgaussian
// bound; mu_scale = 3.3 leaves margin over the drift condition at c = 1.
inline StabilizationSpec make_truncated_gaussian_spec(double sigma, double mu_scale = 3.3,
                                                      double c = 1.0, double trunc = 6.0) {
    if (!(sigma > 0.0)) throw OutOfRange("sigma must be positive");
    StabilizationSpec spec;
    spec.mu1 = mu_scale * sigma;
    spec.mu2 = -mu_scale * sigma;
    spec.beta = 1.0 / (2.0 * sigma * sigma);
    spec.c = c;
    spec.sampler1 = {IncrementSampler::Kind::TruncatedGaussian, spec.mu1, sigma, trunc};
    spec.sampler2 = {IncrementSampler::Kind::TruncatedGaussian, spec.mu2, sigma, trunc};
    spec.validate();
    return spec;
}

struct StabilizationReport {
    std::int64_t ell = 0;
    std::uint64_t trials = 0;
    std::uint64_t master_seed = 0;
    std::vector<double> v_grid;
    std::vector<double> p_empirical;  // P(|Y_ell| >= v)
    std::vector<double> p_upper_ci;   // Clopper-Pearson upper, 99.9%
    std::vector<double> bound;        // theoretical tail bound
    bool all_below_bound = false;     // every CI upper bound under the theory curve
    double max_excess = 0.0;          // max over grid of p_upper_ci - bound
    double max_abs_y = 0.0;
};

// Simulates trials paths of length ell (Y_1 is drawn from sampler2, matching
// a start at Y_0 = 0) and compares the empirical |Y_ell| tail against the
// theoretical bound on a v grid.
inline StabilizationReport simulate_stabilization(const StabilizationSpec& spec, std::int64_t ell,
                                                  std::uint64_t trials, std::uint64_t master_seed,
                                                  std::vector<double> v_grid = {}) {
    spec.validate();
    if (ell < 1) throw OutOfRange("need ell >= 1");
    if (trials == 0) throw OutOfRange("need trials >= 1");

    if (v_grid.empty()) {
        // Start where the bound becomes informative and walk out to ~2e-4.
        double base = spec.mu1 - spec.mu2;
        double unit = 1.0 / (spec.c * std::sqrt(spec.beta));
        for (int j = 1; j <= 16; ++j) v_grid.push_back(base + 0.5 * double(j) * unit);
    }

    std::vector<double> abs_y(trials);
    parallel_for_index(trials, [&](std::uint64_t i) {
        RngStream rng(master_seed, i);
        double y = 0.0;
        for (std::int64_t step = 0; step < ell; ++step)
            y += (y < 0.0) ? spec.sampler1.sample(rng) : spec.sampler2.sample(rng);
        abs_y[i] = std::abs(y);
    });

    StabilizationReport rep;
    rep.ell = ell;
    rep.trials = trials;
    rep.master_seed = master_seed;
    rep.v_grid = v_grid;
    rep.max_abs_y = *std::max_element(abs_y.begin(), abs_y.end());
    std::sort(abs_y.begin(), abs_y.end());
    rep.all_below_bound = true;
    rep.max_excess = -kPosInf;
    for (double v : v_grid) {
        auto first = std::lower_bound(abs_y.begin(), abs_y.end(), v);
        std::uint64_t count = std::uint64_t(abs_y.end() - first);
        double emp = double(count) / double(trials);
        double upper = clopper_pearson_upper(count, trials, 1e-3);
        double bd = spec.tail_bound(v);
        rep.p_empirical.push_back(emp);
        rep.p_upper_ci.push_back(upper);
        rep.bound.push_back(bd);
        rep.max_excess = std::max(rep.max_excess, upper - bd);
        if (upper > bd) rep.all_below_bound = false;
    }
    return rep;
}

}  // namespace fbx
