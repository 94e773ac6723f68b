#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fbx/antisym.hpp"
#include "fbx/caid.hpp"
#include "fbx/rng.hpp"

using namespace fbx;

namespace {

Dmc make_dmc(int nx, int ny, std::vector<double> w) {
    Dmc d;
    d.num_inputs = nx;
    d.num_outputs = ny;
    d.w = std::move(w);
    d.validate();
    return d;
}

Dmc bsc(double q) { return make_dmc(2, 2, {1.0 - q, q, q, 1.0 - q}); }

BroadcastPair random_pair_3x3(RngStream& rng) {
    auto row_normalized = [&]() {
        std::vector<double> w(9);
        for (int r = 0; r < 3; ++r) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c) {
                w[std::size_t(3 * r + c)] = 0.30 + rng.next_double();
                s += w[std::size_t(3 * r + c)];
            }
            for (int c = 0; c < 3; ++c) w[std::size_t(3 * r + c)] /= s;
        }
        return make_dmc(3, 3, std::move(w));
    };
    Dmc w1 = row_normalized();
    Dmc w2 = row_normalized();
    return BroadcastPair{w1, w2};
}

double maximin_value(const BroadcastPair& pair, const InputDist& p) {
    return std::min(mutual_information(p, pair.w1), mutual_information(p, pair.w2));
}

// Exhaustive simplex scan at the given pitch; the benchmark the solver has to
// beat up to grid resolution.
double grid_maximin_3x3(const BroadcastPair& pair, int denom) {
    double best = -1.0;
    for (int i = 0; i <= denom; ++i) {
        for (int j = 0; j <= denom - i; ++j) {
            InputDist p{double(i) / denom, double(j) / denom, double(denom - i - j) / denom};
            best = std::max(best, maximin_value(pair, p));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("identical branches reduce to the single-channel capacity") {
    BroadcastPair pair{bsc(0.11), bsc(0.11)};
    auto an = analyze(pair);
    CHECK(an.capacity_c ==
          Catch::Approx(std::log(2.0) - binary_entropy_nats(0.11)).epsilon(1e-10));
    CHECK(an.p_star[0] == Catch::Approx(0.5).margin(1e-8));
    CHECK(an.c1 == Catch::Approx(an.c2).margin(1e-12));
    CHECK(an.duality_gap >= -1e-12);
    CHECK(an.duality_gap <= 1e-9);
}

TEST_CASE("maximin capacity of the two-leg crossover pair") {
    auto pair = make_parallel_bsc(0.05, 0.10);
    auto an = analyze(pair);
    CHECK(an.capacity_c == Catch::Approx(0.43134807219128496).epsilon(1e-12));
    // Closed form: log 2 - (h(q1) + h(q2)) / 2.
    double closed =
        std::log(2.0) - 0.5 * (binary_entropy_nats(0.05) + binary_entropy_nats(0.10));
    CHECK(an.capacity_c == Catch::Approx(closed).epsilon(1e-11));
    for (double v : an.p_star) CHECK(v == Catch::Approx(0.25).margin(1e-9));
    CHECK(an.c1 == Catch::Approx(0.494631937214071).epsilon(1e-10));
    CHECK(an.c2 == Catch::Approx(an.c1).margin(1e-10));
    CHECK(an.v1 == Catch::Approx(0.4231566843695891).epsilon(1e-10));
    CHECK(an.v2 == Catch::Approx(an.v1).margin(1e-10));
    CHECK(an.eta == Catch::Approx(0.5).margin(1e-8));
    CHECK_FALSE(an.eta_degenerate);
    CHECK(an.v_weighted == Catch::Approx(0.21157834218479454).epsilon(1e-10));
    CHECK(an.v_weighted == Catch::Approx(0.5 * an.v1).margin(1e-12));
    CHECK(an.variance_flat);
    CHECK(an.variance_flat_max_dev <= 1e-9);
    CHECK(an.duality_gap <= 1e-9);
}

TEST_CASE("bottleneck branch pins the solution at that branch's optimum") {
    // Decoder 1 is noiseless, decoder 2 is the binding constraint everywhere.
    BroadcastPair pair{make_dmc(2, 2, {1.0, 0.0, 0.0, 1.0}), bsc(0.3)};
    auto an = analyze(pair);
    CHECK(an.capacity_c ==
          Catch::Approx(std::log(2.0) - binary_entropy_nats(0.3)).epsilon(1e-10));
    CHECK(an.p_star[0] == Catch::Approx(0.5).margin(1e-8));
    CHECK(an.eta_degenerate);
    CHECK(an.eta == 0.5);
    CHECK(an.variance_flat);
}

TEST_CASE("half-swap z pair: equalized interior optimum") {
    auto pair = make_antisym_z(0.3);
    auto an = analyze(pair);
    CHECK(an.capacity_c == Catch::Approx(0.342014488007).epsilon(1e-9));
    CHECK(an.p_star[0] == Catch::Approx(0.5).margin(1e-9));
    CHECK(an.eta == Catch::Approx(0.5).margin(1e-9));
    CHECK_FALSE(an.eta_degenerate);
    CHECK(an.v_weighted == Catch::Approx(0.112882580964).epsilon(1e-9));
    // Both branch informations are equal at the optimum.
    CHECK(mutual_information(an.p_star, pair.w1) ==
          Catch::Approx(mutual_information(an.p_star, pair.w2)).margin(1e-9));
}

TEST_CASE("solver beats a fine simplex grid on random instances") {
    RngStream rng(12345, 0);
    for (int trial = 0; trial < 5; ++trial) {
        auto pair = random_pair_3x3(rng);
        auto an = solve_caid(pair);
        double solver = maximin_value(pair, an.p_star);
        double grid = grid_maximin_3x3(pair, 1000);
        // The solver can only exceed the grid (it searches the full simplex);
        // any deficit beyond grid resolution is a solver failure.
        CHECK(solver >= grid - 1e-5);
        CHECK(an.duality_gap >= -1e-12);
        CHECK(an.duality_gap <= 1e-9);
        // The certified dual cap really caps the grid too.
        CHECK(grid <= solver + an.duality_gap + 1e-12);
    }
}

TEST_CASE("swapping the decoders complements the balance weight") {
    RngStream rng(12345, 0);
    int interior_seen = 0;
    for (int trial = 0; trial < 6; ++trial) {
        auto pair = random_pair_3x3(rng);
        auto an = analyze(pair);
        BroadcastPair swapped{pair.w2, pair.w1};
        auto as = analyze(swapped);
        CHECK(as.capacity_c == Catch::Approx(an.capacity_c).margin(1e-11));
        CHECK(as.c1 == Catch::Approx(an.c2).margin(1e-10));
        CHECK(as.c2 == Catch::Approx(an.c1).margin(1e-10));
        bool interior = !an.eta_degenerate && !as.eta_degenerate && an.eta > 1e-6 &&
                        an.eta < 1.0 - 1e-6;
        if (interior) {
            ++interior_seen;
            CHECK(an.eta + as.eta == Catch::Approx(1.0).margin(1e-9));
            CHECK(as.v_weighted == Catch::Approx(an.v_weighted).margin(1e-9));
        }
    }
    CHECK(interior_seen >= 3);  // the ensemble is known to produce interior cases
}

TEST_CASE("assumption report flags degenerate structure") {
    // Identity pair: zero dispersion at the optimum.
    BroadcastPair idp{make_dmc(2, 2, {1.0, 0.0, 0.0, 1.0}), make_dmc(2, 2, {1.0, 0.0, 0.0, 1.0})};
    auto an = analyze(idp);
    CHECK(an.capacity_c == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(an.eta_degenerate);
    bool mentions_v1 = false;
    for (const auto& s : an.assumption_report) mentions_v1 |= s.find("V_1") != std::string::npos;
    CHECK(mentions_v1);
}

TEST_CASE("non-convergence is reported instead of a silent bad answer") {
    // A generic instance cannot be certified to 1e-9 after a single ascent
    // step; the solver must say so rather than return the iterate.
    RngStream rng(777, 0);
    auto pair = random_pair_3x3(rng);
    CHECK_THROWS_AS(solve_caid(pair, 1e-9, 1), NonConvergence);
}
