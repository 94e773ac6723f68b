#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fbx/antisym.hpp"
#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"
#include "fbx/increment_law.hpp"

using namespace fbx;

namespace {

BroadcastPair z_vs_identity() {
    Dmc w1(2, 2, {0.7, 0.3, 0.0, 1.0});
    Dmc w2(2, 2, {1.0, 0.0, 0.0, 1.0});
    return BroadcastPair(w1, w2);
}

// Hand-built lattice law: -1 w.p. 1/4, +1/2 w.p. 3/4.  Factor split puts the
// whole law on decoder 1 and a unit mass at zero on decoder 2, so every SumCdf
// route must reproduce the plain n-fold convolution.
IncrementLaw hand_lattice_law() {
    IncrementLaw law;
    law.invariant = true;
    law.common.values = {-1.0, 0.5};
    law.common.logp = {std::log(0.25), std::log(0.75)};
    law.mean = law.common.mean();
    law.var = law.common.variance();
    law.factor1 = law.common;
    law.factor2.values = {0.0};
    law.factor2.logp = {0.0};
    law.lattice = detail::snap_to_lattice(law.common);
    return law;
}

} // namespace

TEST_CASE("parallel-BSC increment law: invariant, closed-form support") {
    const double q1 = 0.05, q2 = 0.10;
    auto pair = make_parallel_bsc(q1, q2);
    auto an = solve_caid(pair);
    auto law = increment_law(pair, an);

    REQUIRE(law.invariant);
    REQUIRE(law.per_input.size() == 4);
    for (const auto& pl : law.per_input) {
        REQUIRE(detail::laws_equal(pl, law.common));
    }

    // Outputs are uniform under the optimizer, so each single-decoder density
    // is log(2 W).  The weighted law halves the sum of the two legs.
    const double i1h = std::log(2.0 * (1.0 - q1)), i1t = std::log(2.0 * q1);
    const double i2h = std::log(2.0 * (1.0 - q2)), i2t = std::log(2.0 * q2);
    std::vector<double> want_v = {0.5 * (i1t + i2t), 0.5 * (i1t + i2h),
                                  0.5 * (i1h + i2t), 0.5 * (i1h + i2h)};
    std::vector<double> want_p = {q1 * q2, q1 * (1.0 - q2), (1.0 - q1) * q2,
                                  (1.0 - q1) * (1.0 - q2)};
    REQUIRE(law.common.values.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(law.common.values[i] == Catch::Approx(want_v[i]).margin(1e-12));
        CHECK(std::exp(law.common.logp[i]) == Catch::Approx(want_p[i]).margin(1e-12));
    }
    // Regression pins.
    CHECK(law.common.values[0] == Catch::Approx(-1.956011502714073).margin(1e-9));
    CHECK(law.common.values[3] == Catch::Approx(0.614820276172929).margin(1e-9));

    CHECK(law.mean == Catch::Approx(an.capacity_c).margin(1e-12));
    CHECK(law.var == Catch::Approx(an.v_weighted).margin(1e-9));

    // Factor laws are the scaled per-decoder legs at input 0; their
    // convolution must reproduce the weighted law.
    REQUIRE(law.factor1.values.size() == 2);
    REQUIRE(law.factor2.values.size() == 2);
    std::vector<std::pair<double, double>> conv;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            conv.emplace_back(law.factor1.values[i] + law.factor2.values[j],
                              std::exp(law.factor1.logp[i] + law.factor2.logp[j]));
    auto merged = detail::merge_points(std::move(conv));
    CHECK(detail::laws_equal(merged, law.common));

    // Irrational atom spacing: no exact lattice view.
    CHECK_FALSE(law.lattice.has_value());
}

TEST_CASE("input-dependent law is flagged and refused by SumCdf") {
    auto pair = z_vs_identity();
    auto an = solve_caid(pair);
    auto law = increment_law(pair, an);
    REQUIRE_FALSE(law.invariant);
    CHECK(law.per_input.size() == 2);
    CHECK_THROWS_AS(SumCdf(law, 5), NotInvariant);
}

TEST_CASE("two-fold sum CDF matches direct enumeration") {
    auto pair = make_parallel_bsc(0.05, 0.10);
    auto an = solve_caid(pair);
    auto law = increment_law(pair, an);
    SumCdf cdf(law, 2);
    REQUIRE(cdf.method() == SumMethod::ExactFactor);
    CHECK(cdf.slack_nats() == 0.0);

    const auto& c = law.common;
    CHECK(cdf.min_value() == Catch::Approx(2.0 * c.values.front()).margin(1e-9));
    CHECK(cdf.max_value() == Catch::Approx(2.0 * c.values.back()).margin(1e-9));

    auto brute = [&](double s) {
        KahanSum acc;
        for (std::size_t i = 0; i < c.values.size(); ++i)
            for (std::size_t j = 0; j < c.values.size(); ++j)
                if (c.values[i] + c.values[j] <= s + 1e-12)
                    acc.add(std::exp(c.logp[i] + c.logp[j]));
        return acc.get();
    };
    double lo = cdf.min_value() - 0.5, hi = cdf.max_value() + 0.5;
    for (int k = 0; k <= 80; ++k) {
        double s = lo + (hi - lo) * double(k) / 80.0;
        CHECK(std::exp(cdf.log_cdf(s)) == Catch::Approx(brute(s)).margin(1e-10));
    }
    // Exact atoms are inclusive.
    for (std::size_t i = 0; i < c.values.size(); ++i)
        for (std::size_t j = 0; j < c.values.size(); ++j) {
            double s = c.values[i] + c.values[j];
            CHECK(std::exp(cdf.log_cdf(s)) == Catch::Approx(brute(s)).margin(1e-10));
        }
    CHECK(cdf.log_cdf(cdf.min_value() - 1e-6) == kNegInf);
    CHECK(cdf.log_cdf(cdf.max_value() + 1e-6) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("zero-fold sum is a point mass at zero") {
    auto pair = make_parallel_bsc(0.05, 0.10);
    auto an = solve_caid(pair);
    auto law = increment_law(pair, an);
    SumCdf cdf(law, 0);
    CHECK(cdf.log_cdf(-1e-6) == kNegInf);
    CHECK(cdf.log_cdf(0.0) == Catch::Approx(0.0).margin(1e-12));
    CHECK_THROWS_AS(SumCdf(law, -1), OutOfRange);
}

TEST_CASE("quantized route lower-bounds the exact CDF within published slack") {
    auto pair = make_parallel_bsc(0.05, 0.10);
    auto an = solve_caid(pair);
    auto law = increment_law(pair, an);
    const std::int64_t n = 50;

    SumCdf exact(law, n); // composition route feasible at default budget
    REQUIRE(exact.method() == SumMethod::ExactFactor);
    SumCdf quant(law, n, /*enum_budget=*/8);
    REQUIRE(quant.method() == SumMethod::Quantized);

    double span = law.common.max_value() - law.common.min_value();
    double step = span / double((std::size_t(1) << 16) - 1);
    CHECK(quant.slack_nats() == Catch::Approx(double(n) * step).margin(1e-15));
    REQUIRE(quant.slack_nats() > 0.0);

    double lo = exact.min_value() - 1.0, hi = exact.max_value() + 1.0;
    for (int k = 0; k <= 200; ++k) {
        double s = lo + (hi - lo) * double(k) / 200.0;
        double lq = quant.log_cdf(s);
        double le = exact.log_cdf(s);
        CHECK(lq <= le + 1e-12);                                  // conservative from below
        CHECK(le <= quant.log_cdf(s + quant.slack_nats()) + 1e-12); // drift bounded by slack
    }
}

TEST_CASE("lattice route reproduces the binomial closed form") {
    auto law = hand_lattice_law();
    REQUIRE(law.lattice.has_value());
    CHECK(law.lattice->lattice_step == Catch::Approx(0.5).margin(1e-12));
    CHECK(law.lattice->offset == -2);

    const std::int64_t n = 10;
    SumCdf lat(law, n, /*enum_budget=*/1); // composition route priced out
    REQUIRE(lat.method() == SumMethod::ExactLattice);
    CHECK(lat.slack_nats() == 0.0);
    CHECK(lat.min_value() == Catch::Approx(-10.0).margin(1e-12));
    CHECK(lat.max_value() == Catch::Approx(5.0).margin(1e-12));

    // S = 5 - 1.5 K with K ~ Bin(10, 1/4); P[S <= s] = P[K >= ceil((5-s)/1.5)].
    auto closed = [&](double s) {
        double kmin = std::ceil((5.0 - s) / 1.5 - 1e-9);
        if (kmin <= 0.0) return 0.0; // log 1
        if (kmin > 10.0) return kNegInf;
        double head = std::exp(log_binom_cdf(std::int64_t(kmin) - 1, 10, 0.25));
        return std::log1p(-head);
    };
    for (std::int64_t k = 0; k <= 10; ++k) {
        double atom = 5.0 - 1.5 * double(k);
        CHECK(lat.log_cdf(atom) == Catch::Approx(closed(atom)).margin(1e-12));
        CHECK(lat.log_cdf(atom - 0.7) == Catch::Approx(closed(atom - 0.7)).margin(1e-12));
    }
    CHECK(lat.log_cdf(1.0) == Catch::Approx(-0.74568926268459639).margin(1e-9));
    CHECK(lat.log_cdf(-10.0 - 1e-6) == kNegInf);
    CHECK(lat.log_cdf(5.0) == Catch::Approx(0.0).margin(1e-15));

    // Same law through the composition route must agree everywhere.
    SumCdf fac(law, n);
    REQUIRE(fac.method() == SumMethod::ExactFactor);
    for (int k = 0; k <= 120; ++k) {
        double s = -11.0 + 17.0 * double(k) / 120.0;
        double a = lat.log_cdf(s), b = fac.log_cdf(s);
        if (a == kNegInf || b == kNegInf) {
            CHECK(a == b);
        } else {
            CHECK(a == Catch::Approx(b).margin(1e-12));
        }
    }
}
