#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"
#include "fbx/int_pmf.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Finite law on the reals, sorted support, log-domain masses.
struct DiscreteLaw {
    std::vector<double> values;
    std::vector<double> logp;

    double mean() const {
        KahanSum acc;
        for (std::size_t i = 0; i < values.size(); ++i) acc.add(std::exp(logp[i]) * values[i]);
        return acc.get();
    }
    double variance() const {
        double m = mean();
        KahanSum acc;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double d = values[i] - m;
            acc.add(std::exp(logp[i]) * d * d);
        }
        return acc.get();
    }
    double min_value() const { return values.empty() ? 0.0 : values.front(); }
    double max_value() const { return values.empty() ? 0.0 : values.back(); }
};

namespace detail {

inline constexpr double kValueSnap = 1e-9;   // support comparison tolerance, nats
inline constexpr double kMassSnap = 1e-10;   // mass comparison tolerance

inline DiscreteLaw merge_points(std::vector<std::pair<double, double>> pts, double snap = kValueSnap) {
    std::sort(pts.begin(), pts.end());
    DiscreteLaw law;
    std::size_t i = 0;
    while (i < pts.size()) {
        std::size_t j = i;
        KahanSum mass, moment;
        while (j < pts.size() && pts[j].first - pts[i].first <= snap) {
            mass.add(pts[j].second);
            moment.add(pts[j].second * pts[j].first);
            ++j;
        }
        if (mass.get() > 0.0) {
            law.values.push_back(moment.get() / mass.get());
            law.logp.push_back(std::log(mass.get()));
        }
        i = j;
    }
    return law;
}

inline bool laws_equal(const DiscreteLaw& a, const DiscreteLaw& b) {
    if (a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (std::abs(a.values[i] - b.values[i]) > kValueSnap) return false;
        if (std::abs(std::exp(a.logp[i]) - std::exp(b.logp[i])) > kMassSnap) return false;
    }
    return true;
}

// Tries to place the support on a zero-anchored lattice: every value must sit
// within kValueSnap of an integer multiple of the candidate step.
inline std::optional<IntPmf> snap_to_lattice(const DiscreteLaw& law) {
    if (law.values.size() == 1) {
        double v = law.values[0];
        double step = (v == 0.0) ? 1.0 : std::abs(v);
        if (std::abs(v - std::llround(v / step) * step) > kValueSnap) return std::nullopt;
        IntPmf pmf;
        pmf.lattice_step = step;
        pmf.offset = std::llround(v / step);
        pmf.probs = {std::exp(law.logp[0])};
        return pmf;
    }
    double gap = kPosInf;
    for (std::size_t i = 1; i < law.values.size(); ++i)
        gap = std::min(gap, law.values[i] - law.values[i - 1]);
    if (!(gap > 0.0) || !std::isfinite(gap)) return std::nullopt;
    for (int div = 1; div <= 64; ++div) {
        double step = gap / div;
        bool ok = true;
        std::int64_t lo = 0, hi = 0;
        for (double v : law.values) {
            double k = v / step;
            std::int64_t ki = std::llround(k);
            if (std::abs(v - double(ki) * step) > kValueSnap) { ok = false; break; }
            lo = std::min(lo, ki);
            hi = std::max(hi, ki);
        }
        if (!ok) continue;
        if (hi - lo + 1 > std::int64_t(kLatticeSupportCap)) return std::nullopt;
        IntPmf pmf;
        pmf.lattice_step = step;
        pmf.offset = lo;
        pmf.probs.assign(std::size_t(hi - lo + 1), 0.0);
        for (std::size_t i = 0; i < law.values.size(); ++i) {
            std::int64_t ki = std::llround(law.values[i] / step);
            pmf.probs[std::size_t(ki - lo)] += std::exp(law.logp[i]);
        }
        return pmf;
    }
    return std::nullopt;
}

} // namespace detail

// Single-letter law of the eta-weighted info-density sum, with the two
// independent per-decoder factors kept alongside.  The factors are taken at
// input 0; when the weighted law is input-invariant its n-fold convolution
// equals factor1^(*n) * factor2^(*n) regardless of which inputs a feedback
// encoder actually picks.
struct IncrementLaw {
    bool invariant = false;
    DiscreteLaw common;
    DiscreteLaw factor1, factor2;
    std::optional<IntPmf> lattice;       // exact zero-anchored lattice view, if one exists
    double mean = 0.0, var = 0.0;
    std::vector<DiscreteLaw> per_input;  // diagnostic: weighted law per input
};

inline IncrementLaw increment_law(const BroadcastPair& pair, const ChannelAnalysis& an) {
    pair.validate();
    const int nx = pair.num_inputs();
    const int ny = pair.num_outputs();
    auto pw1 = output_dist(an.p_star, pair.w1);
    auto pw2 = output_dist(an.p_star, pair.w2);
    const double e1 = an.eta, e2 = 1.0 - an.eta;

    IncrementLaw law;
    law.per_input.reserve(std::size_t(nx));
    for (int x = 0; x < nx; ++x) {
        std::vector<std::pair<double, double>> pts;
        for (int y1 = 0; y1 < ny; ++y1) {
            double p1 = pair.w1.at(x, y1);
            if (p1 == 0.0) continue;
            double i1 = info_density(pair.w1, pw1, x, y1);
            for (int y2 = 0; y2 < ny; ++y2) {
                double p2 = pair.w2.at(x, y2);
                if (p2 == 0.0) continue;
                double i2 = info_density(pair.w2, pw2, x, y2);
                pts.emplace_back(e1 * i1 + e2 * i2, p1 * p2);
            }
        }
        law.per_input.push_back(detail::merge_points(std::move(pts)));
    }

    law.invariant = true;
    for (int x = 1; x < nx; ++x)
        if (!detail::laws_equal(law.per_input[0], law.per_input[std::size_t(x)])) {
            law.invariant = false;
            break;
        }
    if (!law.invariant) return law;

    law.common = law.per_input[0];
    law.mean = law.common.mean();
    law.var = law.common.variance();
    law.lattice = detail::snap_to_lattice(law.common);

    auto factor = [&](const Dmc& w, const std::vector<double>& pw, double scale) {
        std::vector<std::pair<double, double>> pts;
        for (int y = 0; y < ny; ++y) {
            double p = w.at(0, y);
            if (p > 0.0) pts.emplace_back(scale * info_density(w, pw, 0, y), p);
        }
        return detail::merge_points(std::move(pts));
    };
    law.factor1 = factor(pair.w1, pw1, e1);
    law.factor2 = factor(pair.w2, pw2, e2);
    return law;
}

// ---------------------------------------------------------------------------
// CDF of the n-fold sum S_n.

enum class SumMethod { ExactFactor, ExactLattice, Quantized };

class SumCdf {
public:
    // Route availability in preference order; `bins` only affects the
    // quantized fallback.
    SumCdf(const IncrementLaw& law, std::int64_t n, std::size_t enum_budget = std::size_t(4) << 20,
           std::size_t bins = std::size_t(1) << 16) {
        if (!law.invariant) throw NotInvariant("SumCdf needs an input-invariant increment law");
        if (n < 0) throw OutOfRange("SumCdf needs n >= 0");
        n_ = n;
        if (build_factor_route(law, enum_budget)) return;
        if (build_lattice_route(law)) return;
        build_quantized_route(law, bins);
    }

    // log P[S_n <= s]; conservative from below on the quantized route.
    double log_cdf(double s) const {
        if (method_ == SumMethod::ExactFactor) {
            double m = kNegInf;
            for (std::size_t i = 0; i < a_values_.size(); ++i) {
                double t = term_at(i, s);
                if (t > m) m = t;
            }
            if (m == kNegInf) return kNegInf;
            KahanSum acc;
            for (std::size_t i = 0; i < a_values_.size(); ++i) {
                double t = term_at(i, s);
                if (t != kNegInf) acc.add(std::exp(t - m));
            }
            return m + std::log(acc.get());
        }
        // lattice / quantized: indexable prefix
        double idx_real = std::floor(s / step_ - double(offset_) + 1e-9);
        if (idx_real < 0.0) return kNegInf;
        std::size_t idx = std::size_t(std::min(idx_real, double(prefix_log_.size() - 1)));
        return prefix_log_[idx];
    }

    SumMethod method() const { return method_; }
    double slack_nats() const { return slack_nats_; }
    double min_value() const { return vmin_; }
    double max_value() const { return vmax_; }

private:
    // Factor route helpers: per-factor n-fold laws via composition counts.
    static double composition_count(std::int64_t n, std::size_t k) {
        return std::exp(log_binomial(n + std::int64_t(k) - 1, std::int64_t(k) - 1));
    }

    static void enumerate_power(const DiscreteLaw& f, std::int64_t n,
                                std::vector<double>& values, std::vector<double>& logp) {
        const std::size_t k = f.values.size();
        double lognfact = log_factorial(n);
        // Depth-first over compositions of n into k parts.
        struct Frame { std::size_t slot; std::int64_t remaining; double value; double logw; };
        std::vector<Frame> stack;
        stack.push_back({0, n, 0.0, lognfact});
        while (!stack.empty()) {
            Frame fr = stack.back();
            stack.pop_back();
            if (fr.slot + 1 == k) {
                double lw = fr.logw - log_factorial(fr.remaining) +
                            double(fr.remaining) * f.logp[fr.slot];
                values.push_back(fr.value + double(fr.remaining) * f.values[fr.slot]);
                logp.push_back(lw);
                continue;
            }
            for (std::int64_t c = 0; c <= fr.remaining; ++c) {
                stack.push_back({fr.slot + 1, fr.remaining - c,
                                 fr.value + double(c) * f.values[fr.slot],
                                 fr.logw - log_factorial(c) + double(c) * f.logp[fr.slot]});
            }
        }
    }

    bool build_factor_route(const IncrementLaw& law, std::size_t budget) {
        const auto& f1 = law.factor1;
        const auto& f2 = law.factor2;
        if (f1.values.empty() || f2.values.empty()) return false;
        if (composition_count(n_, f1.values.size()) > double(budget)) return false;
        if (composition_count(n_, f2.values.size()) > double(budget)) return false;
        method_ = SumMethod::ExactFactor;

        std::vector<double> av, alp, bv, blp;
        enumerate_power(f1, n_, av, alp);
        enumerate_power(f2, n_, bv, blp);
        auto sort_pair = [](std::vector<double>& v, std::vector<double>& lp) {
            std::vector<std::size_t> idx(v.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
            std::vector<double> v2(v.size()), lp2(v.size());
            for (std::size_t i = 0; i < idx.size(); ++i) { v2[i] = v[idx[i]]; lp2[i] = lp[idx[i]]; }
            v = std::move(v2);
            lp = std::move(lp2);
        };
        sort_pair(av, alp);
        sort_pair(bv, blp);
        a_values_ = std::move(av);
        a_logp_ = std::move(alp);
        b_values_ = std::move(bv);
        // Prefix log-CDF of factor 2's n-fold law.
        b_prefix_log_.resize(b_values_.size());
        double run = kNegInf;
        for (std::size_t i = 0; i < b_values_.size(); ++i) {
            run = log_add(run, blp[i]);
            b_prefix_log_[i] = std::min(run, 0.0);
        }
        vmin_ = a_values_.front() + b_values_.front();
        vmax_ = a_values_.back() + b_values_.back();
        return true;
    }

    double term_at(std::size_t i, double s) const {
        double rem = s - a_values_[i];
        auto it = std::upper_bound(b_values_.begin(), b_values_.end(), rem + 1e-12);
        if (it == b_values_.begin()) return kNegInf;
        std::size_t j = std::size_t(it - b_values_.begin()) - 1;
        return a_logp_[i] + b_prefix_log_[j];
    }

    bool build_lattice_route(const IncrementLaw& law) {
        if (!law.lattice) return false;
        std::size_t final_bins = std::size_t(n_) * (law.lattice->probs.size() - 1) + 1;
        if (final_bins > detail::kLatticeSupportCap) return false;
        method_ = SumMethod::ExactLattice;
        IntPmf powered = lattice_convolve_power(*law.lattice, n_);
        step_ = powered.lattice_step;
        offset_ = powered.offset;
        fill_prefix(powered.probs);
        vmin_ = double(powered.offset) * step_;
        vmax_ = double(powered.offset + std::int64_t(powered.probs.size()) - 1) * step_;
        return true;
    }

    // Conservative fallback: base support rounded *up* onto a zero-anchored
    // lattice, then n sequential sparse convolutions in the linear domain.
    // The computed CDF lower-bounds the true one; the value drift is at most
    // n * step.
    void build_quantized_route(const IncrementLaw& law, std::size_t bins) {
        method_ = SumMethod::Quantized;
        const auto& c = law.common;
        double lo = c.min_value(), hi = c.max_value();
        double span = std::max(hi - lo, 1e-12);
        // Keep the n-fold support under the lattice cap: coarsen if needed.
        std::size_t max_base = std::max<std::size_t>(
            (detail::kLatticeSupportCap - 1) / std::size_t(std::max<std::int64_t>(n_, 1)) + 1, 16);
        bins = std::min(bins, max_base);
        step_ = span / double(bins - 1);
        std::int64_t bmin = std::int64_t(std::ceil(lo / step_ - 1e-9));
        std::int64_t bmax = bmin;
        std::vector<std::pair<std::int64_t, double>> base;
        for (std::size_t i = 0; i < c.values.size(); ++i) {
            std::int64_t k = std::int64_t(std::ceil(c.values[i] / step_ - 1e-9));
            base.emplace_back(k, std::exp(c.logp[i]));
            bmax = std::max(bmax, k);
            bmin = std::min(bmin, k);
        }
        std::size_t width = std::size_t(bmax - bmin) + 1;
        std::size_t final_size = std::size_t(n_) * (width - 1) + 1;
        if (final_size > (std::size_t(1) << 22))
            throw SupportOverflow("quantized convolution support exceeds 2^22 bins");
        slack_nats_ = double(n_) * step_;
        offset_ = n_ * bmin;
        std::vector<double> cur(final_size, 0.0), next(final_size, 0.0);
        cur[0] = 1.0;
        std::size_t cur_width = 1;
        for (std::int64_t i = 0; i < n_; ++i) {
            std::fill(next.begin(), next.begin() + std::ptrdiff_t(cur_width + width - 1), 0.0);
            for (std::size_t j = 0; j < cur_width; ++j) {
                double pj = cur[j];
                if (pj == 0.0) continue;
                for (const auto& [k, pk] : base) next[j + std::size_t(k - bmin)] += pj * pk;
            }
            cur_width += width - 1;
            std::swap(cur, next);
        }
        fill_prefix(cur);
        vmin_ = double(offset_) * step_;
        vmax_ = double(offset_ + std::int64_t(final_size) - 1) * step_;
    }

    void fill_prefix(const std::vector<double>& probs) {
        prefix_log_.resize(probs.size());
        KahanSum acc;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc.add(probs[i]);
            double v = std::min(acc.get(), 1.0);
            prefix_log_[i] = v > 0.0 ? std::log(v) : kNegInf;
        }
    }

    std::int64_t n_ = 0;
    SumMethod method_ = SumMethod::ExactFactor;
    double slack_nats_ = 0.0;
    double vmin_ = 0.0, vmax_ = 0.0;

    std::vector<double> a_values_, a_logp_;
    std::vector<double> b_values_, b_prefix_log_;

    double step_ = 1.0;
    std::int64_t offset_ = 0;
    std::vector<double> prefix_log_;
};

} // namespace fbx
