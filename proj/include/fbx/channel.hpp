#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fbx/errors.hpp"
#include "fbx/special.hpp"

namespace fbx {

// Row-stochastic transition matrix of a discrete memoryless channel,
// row-major: w[x * num_outputs + y].
struct Dmc {
    int num_inputs = 0;
    int num_outputs = 0;
    std::vector<double> w;

    double at(int x, int y) const { return w[std::size_t(x) * num_outputs + y]; }
    double& at(int x, int y) { return w[std::size_t(x) * num_outputs + y]; }

    void validate(double tol = 1e-12) const {
        if (num_inputs <= 0 || num_outputs <= 0)
            throw InvalidDistribution("Dmc needs positive alphabet sizes");
        if (w.size() != std::size_t(num_inputs) * num_outputs)
            throw InvalidDistribution("Dmc matrix size mismatch");
        for (int x = 0; x < num_inputs; ++x) {
            KahanSum row;
            for (int y = 0; y < num_outputs; ++y) {
                double p = at(x, y);
                if (!(p >= 0.0) || p > 1.0 + tol || !std::isfinite(p))
                    throw InvalidDistribution("Dmc entry outside [0,1] at row " + std::to_string(x));
                row.add(p);
            }
            if (std::abs(row.get() - 1.0) > tol)
                throw InvalidDistribution("Dmc row " + std::to_string(x) + " does not sum to 1");
        }
    }
};

// Two channels sharing input and output alphabets, one per decoder.
struct BroadcastPair {
    Dmc w1, w2;

    void validate(double tol = 1e-12) const {
        w1.validate(tol);
        w2.validate(tol);
        if (w1.num_inputs != w2.num_inputs || w1.num_outputs != w2.num_outputs)
            throw InvalidDistribution("BroadcastPair alphabets differ between decoders");
    }
    int num_inputs() const { return w1.num_inputs; }
    int num_outputs() const { return w1.num_outputs; }
    const Dmc& branch(int k) const { return k == 0 ? w1 : w2; }
};

using InputDist = std::vector<double>;
using DirectionVector = std::vector<double>; // zero-sum perturbation of an input law

inline void validate_input_dist(const InputDist& p, int num_inputs, double tol = 1e-12) {
    if (int(p.size()) != num_inputs) throw InvalidDistribution("input law size mismatch");
    KahanSum acc;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidDistribution("input law has a negative entry");
        acc.add(v);
    }
    if (std::abs(acc.get() - 1.0) > tol) throw InvalidDistribution("input law does not sum to 1");
}

inline void validate_direction(const DirectionVector& v, int num_inputs, double tol = 1e-12) {
    if (int(v.size()) != num_inputs) throw ZeroSumViolation("direction size mismatch");
    KahanSum acc;
    for (double x : v) acc.add(x);
    if (std::abs(acc.get()) > tol) throw ZeroSumViolation("direction entries must sum to 0");
}

// Output law P W.
inline std::vector<double> output_dist(const InputDist& p, const Dmc& w) {
    std::vector<double> out(w.num_outputs, 0.0);
    for (int y = 0; y < w.num_outputs; ++y) {
        KahanSum acc;
        for (int x = 0; x < w.num_inputs; ++x) acc.add(p[x] * w.at(x, y));
        out[y] = acc.get();
    }
    return out;
}

// log W(y|x) - log PW(y).  Zero channel mass gives -inf; positive channel
// mass against zero output mass cannot arise from a valid input (but is
// reported rather than silently produced).
inline double info_density(const Dmc& w, const std::vector<double>& pw, int x, int y) {
    double num = w.at(x, y);
    if (num == 0.0) return kNegInf;
    if (pw[y] == 0.0)
        throw DivergentDensity("W(y|x) > 0 with PW(y) = 0 at x=" + std::to_string(x) +
                               " y=" + std::to_string(y));
    return std::log(num) - std::log(pw[y]);
}

// D(W(.|x) || PW), the conditional mean of the info density given x.
inline double divergence_to_output(const Dmc& w, const std::vector<double>& pw, int x) {
    KahanSum acc;
    for (int y = 0; y < w.num_outputs; ++y) {
        double p = w.at(x, y);
        if (p > 0.0) acc.add(p * info_density(w, pw, x, y));
    }
    return acc.get();
}

inline double mutual_information(const InputDist& p, const Dmc& w) {
    validate_input_dist(p, w.num_inputs);
    auto pw = output_dist(p, w);
    KahanSum acc;
    for (int x = 0; x < w.num_inputs; ++x)
        if (p[x] > 0.0) acc.add(p[x] * divergence_to_output(w, pw, x));
    return acc.get();
}

// Var[i(x;Y) | X = x] under Y ~ W(.|x).
inline double cond_var_given_x(const Dmc& w, const std::vector<double>& pw, int x) {
    double mean = divergence_to_output(w, pw, x);
    KahanSum acc;
    for (int y = 0; y < w.num_outputs; ++y) {
        double p = w.at(x, y);
        if (p > 0.0) {
            double d = info_density(w, pw, x, y) - mean;
            acc.add(p * d * d);
        }
    }
    return acc.get();
}

// Conditional information variance E_P[ Var[i | X] ].
inline double cond_info_variance(const InputDist& p, const Dmc& w) {
    validate_input_dist(p, w.num_inputs);
    auto pw = output_dist(p, w);
    KahanSum acc;
    for (int x = 0; x < w.num_inputs; ++x)
        if (p[x] > 0.0) acc.add(p[x] * cond_var_given_x(w, pw, x));
    return acc.get();
}

// First-order change of I(P,W) along a zero-sum direction v:
// sum_x v_x D(W(.|x) || PW).
inline double directional_derivative(const InputDist& p, const Dmc& w, const DirectionVector& v) {
    validate_input_dist(p, w.num_inputs);
    validate_direction(v, w.num_inputs);
    auto pw = output_dist(p, w);
    KahanSum acc;
    for (int x = 0; x < w.num_inputs; ++x)
        if (v[x] != 0.0) acc.add(v[x] * divergence_to_output(w, pw, x));
    return acc.get();
}

} // namespace fbx
