#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"

namespace fbx {

// Block decomposition of a half-swap symmetric pair: the output alphabet
// splits into r groups; within each group the top and bottom input halves are
// scaled weakly symmetric blocks with group masses p1[i] / p2[i].
struct AntisymDecomposition {
    int r = 0;
    std::vector<std::vector<int>> groups;          // output indices per block
    std::vector<double> p1, p2;                    // row mass of each block, per half
    std::vector<std::vector<double>> w1_blocks;    // normalized top-half blocks, row-major
    std::vector<std::vector<double>> w2_blocks;    // normalized bottom-half blocks
};

namespace detail {

inline bool multiset_equal(std::vector<double> a, std::vector<double> b, double tol) {
    if (a.size() != b.size()) return false;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > tol) return false;
    return true;
}

// Rows are permutations of one another and column sums agree.
inline bool weakly_symmetric(const std::vector<std::vector<double>>& rows, double tol) {
    if (rows.empty() || rows[0].empty()) return false;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!multiset_equal(rows[0], rows[i], tol)) return false;
    std::size_t ncols = rows[0].size();
    double ref = 0.0;
    for (std::size_t c = 0; c < ncols; ++c) {
        double s = 0.0;
        for (const auto& r : rows) s += r[c];
        if (c == 0) ref = s;
        else if (std::abs(s - ref) > tol * rows.size()) return false;
    }
    return true;
}

} // namespace detail

// Tests the half-swap structure: W2(y | pi(x)) = W1(y | x) with pi exchanging
// input halves, and a partition of the outputs into scaled weakly symmetric
// blocks.  Returns nullopt when the pair is not of this family.
inline std::optional<AntisymDecomposition> check_antisymmetric(const BroadcastPair& pair,
                                                               double tol = 1e-12) {
    pair.validate();
    const int nx = pair.num_inputs();
    const int ny = pair.num_outputs();
    if (nx % 2 != 0) return std::nullopt;
    const int half = nx / 2;

    for (int x = 0; x < nx; ++x) {
        int px = (x + half) % nx;
        for (int y = 0; y < ny; ++y)
            if (std::abs(pair.w2.at(px, y) - pair.w1.at(x, y)) > tol) return std::nullopt;
    }

    // Group outputs by the (top-half, bottom-half) column multisets of W1.
    std::vector<int> group_of(ny, -1);
    std::vector<std::vector<int>> groups;
    auto column_part = [&](int y, bool top) {
        std::vector<double> col;
        for (int x = top ? 0 : half; x < (top ? half : nx); ++x) col.push_back(pair.w1.at(x, y));
        return col;
    };
    for (int y = 0; y < ny; ++y) {
        for (std::size_t g = 0; g < groups.size(); ++g) {
            int rep = groups[g][0];
            if (detail::multiset_equal(column_part(y, true), column_part(rep, true), tol) &&
                detail::multiset_equal(column_part(y, false), column_part(rep, false), tol)) {
                group_of[y] = int(g);
                break;
            }
        }
        if (group_of[y] < 0) {
            group_of[y] = int(groups.size());
            groups.push_back({});
        }
        groups[std::size_t(group_of[y])].push_back(y);
    }

    AntisymDecomposition dec;
    dec.r = int(groups.size());
    dec.groups = groups;
    for (const auto& g : groups) {
        double mass_top = 0.0, mass_bot = 0.0;
        for (int y : g) {
            mass_top += pair.w1.at(0, y);
            mass_bot += pair.w1.at(half, y);
        }
        // Row masses must be flat across each half.
        for (int x = 0; x < nx; ++x) {
            double m = 0.0;
            for (int y : g) m += pair.w1.at(x, y);
            if (std::abs(m - (x < half ? mass_top : mass_bot)) > tol * std::max(1, int(g.size())))
                return std::nullopt;
        }
        auto normalized_block = [&](bool top) {
            std::vector<std::vector<double>> rows;
            double mass = top ? mass_top : mass_bot;
            for (int x = top ? 0 : half; x < (top ? half : nx); ++x) {
                std::vector<double> row;
                for (int y : g)
                    row.push_back(mass > tol ? pair.w1.at(x, y) / mass : 1.0 / double(g.size()));
                rows.push_back(row);
            }
            return rows;
        };
        auto top_rows = normalized_block(true);
        auto bot_rows = normalized_block(false);
        if (mass_top > tol && !detail::weakly_symmetric(top_rows, 1e-9)) return std::nullopt;
        if (mass_bot > tol && !detail::weakly_symmetric(bot_rows, 1e-9)) return std::nullopt;
        dec.p1.push_back(mass_top);
        dec.p2.push_back(mass_bot);
        std::vector<double> flat_top, flat_bot;
        for (const auto& r : top_rows) flat_top.insert(flat_top.end(), r.begin(), r.end());
        for (const auto& r : bot_rows) flat_bot.insert(flat_bot.end(), r.begin(), r.end());
        dec.w1_blocks.push_back(flat_top);
        dec.w2_blocks.push_back(flat_bot);
    }
    return dec;
}

// Rebuild W1 from a decomposition (column order per group as discovered).
inline Dmc reassemble_w1(const AntisymDecomposition& dec, int num_inputs, int num_outputs) {
    Dmc w;
    w.num_inputs = num_inputs;
    w.num_outputs = num_outputs;
    w.w.assign(std::size_t(num_inputs) * num_outputs, 0.0);
    const int half = num_inputs / 2;
    for (int g = 0; g < dec.r; ++g) {
        const auto& cols = dec.groups[std::size_t(g)];
        for (int x = 0; x < num_inputs; ++x) {
            bool top = x < half;
            double mass = top ? dec.p1[std::size_t(g)] : dec.p2[std::size_t(g)];
            const auto& block = top ? dec.w1_blocks[std::size_t(g)] : dec.w2_blocks[std::size_t(g)];
            int row = top ? x : x - half;
            for (std::size_t c = 0; c < cols.size(); ++c)
                w.at(x, cols[c]) = mass * block[std::size_t(row) * cols.size() + c];
        }
    }
    return w;
}

// Two BSC legs observed through a common binary output: inputs {0,1} reach
// decoder 1 through BSC(q1) and decoder 2 through BSC(q2); inputs {2,3} swap
// the roles.
inline BroadcastPair make_parallel_bsc(double q1, double q2) {
    if (!(q1 >= 0.0 && q1 <= 1.0 && q2 >= 0.0 && q2 <= 1.0))
        throw OutOfRange("make_parallel_bsc needs q1,q2 in [0,1]");
    auto bsc_rows = [](double q) {
        return std::vector<double>{1.0 - q, q, q, 1.0 - q};
    };
    Dmc w1;
    w1.num_inputs = 4;
    w1.num_outputs = 2;
    auto a = bsc_rows(q1), b = bsc_rows(q2);
    w1.w = a;
    w1.w.insert(w1.w.end(), b.begin(), b.end());
    Dmc w2;
    w2.num_inputs = 4;
    w2.num_outputs = 2;
    w2.w = b;
    w2.w.insert(w2.w.end(), a.begin(), a.end());
    BroadcastPair pair{w1, w2};
    pair.validate();
    return pair;
}

// Recovers (q1, q2) if the pair matches make_parallel_bsc entrywise.
inline std::optional<std::pair<double, double>> parallel_bsc_params(const BroadcastPair& pair,
                                                                    double tol = 1e-12) {
    if (pair.num_inputs() != 4 || pair.num_outputs() != 2) return std::nullopt;
    double q1 = pair.w1.at(0, 1);
    double q2 = pair.w1.at(2, 1);
    BroadcastPair ref = make_parallel_bsc(q1, q2);
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 2; ++y) {
            if (std::abs(pair.w1.at(x, y) - ref.w1.at(x, y)) > tol) return std::nullopt;
            if (std::abs(pair.w2.at(x, y) - ref.w2.at(x, y)) > tol) return std::nullopt;
        }
    return std::make_pair(q1, q2);
}

// Z-channel pair: decoder 1 sees input 0 flipped with probability q and input
// 1 noiselessly; decoder 2 swaps the input roles.
inline BroadcastPair make_antisym_z(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw OutOfRange("make_antisym_z needs q in [0,1]");
    Dmc w1;
    w1.num_inputs = 2;
    w1.num_outputs = 2;
    w1.w = {1.0 - q, q, 0.0, 1.0};
    Dmc w2;
    w2.num_inputs = 2;
    w2.num_outputs = 2;
    w2.w = {0.0, 1.0, 1.0 - q, q};
    BroadcastPair pair{w1, w2};
    pair.validate();
    return pair;
}

struct DispersionHalvingCertificate {
    bool certified = false;
    double eta = 0.0;
    double v1 = 0.0, v2 = 0.0;
    double v_weighted = 0.0;
    double max_sum_var_dev = 0.0;   // max_x |Var[i1 + i2 | x] - 2 V1|
    double max_pstar_dev = 0.0;     // max_x |p_star(x) - 1/|X||
    std::vector<std::string> reasons;
    ChannelAnalysis analysis;
};

// Checks the structural consequences that let the dispersion halve: uniform
// maximin law, eta = 1/2, matched variances, and a flat per-input sum
// variance.
inline DispersionHalvingCertificate certify_dispersion_halving(const BroadcastPair& pair) {
    if (!check_antisymmetric(pair))
        throw WrongChannelFamily("certify_dispersion_halving requires the half-swap block structure");
    DispersionHalvingCertificate cert;
    cert.analysis = analyze(pair);
    const auto& an = cert.analysis;
    cert.eta = an.eta;
    cert.v1 = an.v1;
    cert.v2 = an.v2;
    cert.v_weighted = an.v_weighted;

    const int nx = pair.num_inputs();
    for (int x = 0; x < nx; ++x)
        cert.max_pstar_dev = std::max(cert.max_pstar_dev, std::abs(an.p_star[x] - 1.0 / nx));

    auto pw1 = output_dist(an.p_star, pair.w1);
    auto pw2 = output_dist(an.p_star, pair.w2);
    for (int x = 0; x < nx; ++x) {
        double s = cond_var_given_x(pair.w1, pw1, x) + cond_var_given_x(pair.w2, pw2, x);
        cert.max_sum_var_dev = std::max(cert.max_sum_var_dev, std::abs(s - 2.0 * an.v1));
    }

    if (std::abs(an.eta - 0.5) > 1e-8) cert.reasons.push_back("eta differs from 1/2");
    if (std::abs(an.v1 - an.v2) > 1e-10) cert.reasons.push_back("V1 != V2");
    if (cert.max_sum_var_dev > 1e-9) cert.reasons.push_back("Var[i1+i2 | x] not flat");
    if (cert.max_pstar_dev > 1e-6) cert.reasons.push_back("p_star not uniform");
    cert.certified = cert.reasons.empty();
    return cert;
}

} // namespace fbx
