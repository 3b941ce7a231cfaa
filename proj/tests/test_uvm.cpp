#include "ppde/uvm.hpp"

#include <doctest.h>

#include <cmath>

using namespace ppde;

namespace {

const PiecewisePath kZero(1);

UvmSpec collapsed_spec() {
    UvmSpec s;
    s.r = 1.0;
    s.sigma_lo = s.sigma_hi = std::sqrt(2.0);
    s.drift_bound = 0.0;
    s.Q = ConvexDomain::interval(-1.0, 1.0);
    s.payoff = ReducedPayoff::constant(1.0);
    return s;
}

}  // namespace

TEST_CASE("price_direct: harmonic interpolation at vanishing rate") {
    UvmSpec s;
    s.r = 1e-9;
    s.sigma_lo = s.sigma_hi = 1.0;
    s.Q = ConvexDomain::interval(-1.0, 1.0);
    s.payoff = ReducedPayoff::markovian1d([](double x) { return x < 0 ? 0.0 : 1.0; });
    const UvmPrice p = price_direct(s, kZero, 1.0 / 200);
    CHECK(p.price == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("price_direct: collapsed bands match the hyperbolic-cosine solution") {
    const UvmPrice p = price_direct(collapsed_spec(), kZero, 1.0 / 200);
    CHECK(std::abs(p.price - 1.0 / std::cosh(1.0)) <= 5e-6);
    // Shifted history evaluates the same field off-center.
    const UvmPrice q = price_direct(collapsed_spec(), lin_interp({{1.0, 0.5}}), 1.0 / 200);
    CHECK(std::abs(q.price - std::cosh(0.5) / std::cosh(1.0)) <= 5e-6);
}

TEST_CASE("price_direct: worst case volatility for a convex payoff is the upper band") {
    UvmSpec wide = collapsed_spec();
    wide.sigma_lo = 0.8;
    wide.sigma_hi = 1.5;
    wide.payoff = ReducedPayoff::markovian1d([](double x) { return std::abs(x); });
    const UvmPrice p_wide = price_direct(wide, kZero, 1.0 / 200);

    UvmSpec high = wide;
    high.sigma_lo = high.sigma_hi = 1.5;
    const UvmPrice p_high = price_direct(high, kZero, 1.0 / 200);
    CHECK(p_wide.price == doctest::Approx(p_high.price).epsilon(1e-9));

    CHECK_THROWS_AS(price_direct([&] {
        UvmSpec bad = wide;
        bad.r = 0.0;
        return bad;
    }(), kZero, 0.01), ConfigError);
}

TEST_CASE("price is monotone in the upper volatility") {
    double prev = -1.0;
    for (double hi : {1.0, 1.2, 1.5, 2.0}) {
        UvmSpec s = collapsed_spec();
        s.sigma_lo = 1.0;
        s.sigma_hi = hi;
        s.payoff = ReducedPayoff::markovian1d([](double x) { return std::abs(x); });
        const double p = price_direct(s, kZero, 0.01).price;
        CHECK(p >= prev - 1e-10);
        prev = p;
    }
}

TEST_CASE("price is linear in the payoff for a single measure") {
    UvmSpec s = collapsed_spec();  // collapsed bands, zero drift
    const ReducedPayoff g1 = ReducedPayoff::markovian1d([](double x) { return x; });
    const ReducedPayoff g2 = ReducedPayoff::markovian1d([](double x) { return x * x; });
    const ReducedPayoff gsum = ReducedPayoff::markovian1d([](double x) { return x + x * x; });
    s.payoff = g1;
    const double p1 = price_direct(s, kZero, 0.01).price;
    s.payoff = g2;
    const double p2 = price_direct(s, kZero, 0.01).price;
    s.payoff = gsum;
    const double ps = price_direct(s, kZero, 0.01).price;
    CHECK(ps == doctest::Approx(p1 + p2).epsilon(1e-9));
}

TEST_CASE("price_perron brackets the collapsed-band price") {
    const UvmBracket b = price_perron(collapsed_spec(), kZero, 0.1, 4, 1.0 / 200);
    const double truth = 1.0 / std::cosh(1.0);
    CHECK(b.contains(truth));
    CHECK(b.width() <= 5e-3);
    CHECK(b.u_estimate == doctest::Approx(truth).epsilon(1e-4));

    // Constant payoff with positive rate prices strictly below the constant.
    UvmSpec s = collapsed_spec();
    s.payoff = ReducedPayoff::constant(2.0);
    const UvmBracket b2 = price_perron(s, kZero, 0.25, 3, 1.0 / 100);
    CHECK(b2.hi < 2.0);
    CHECK(b2.lo > 0.0);
}

TEST_CASE("price_perron gap decreases in m for widened bands") {
    UvmSpec s = collapsed_spec();
    s.sigma_lo = 1.1;
    s.sigma_hi = 1.3;
    s.payoff = ReducedPayoff::markovian1d([](double x) { return 0.5 * (x + 1.0); });
    const GeneratorSpec G = s.generator();
    PerronParams params;
    params.h = 1.0 / 100;
    params.m_list = {1, 2, 3};
    params.closure_mode = ClosureMode::Canonical;
    params.with_capacity = false;
    const PerronResult res = sweep(kZero, 0.25, s.Q, G, s.payoff, params);
    CHECK(res.gap[1] < res.gap[0]);
    CHECK(res.gap[2] < res.gap[1]);
}

TEST_CASE("mc_superhedge_lb: band policies straddle the price correctly") {
    UvmSpec s = collapsed_spec();
    s.sigma_lo = 1.0;
    s.sigma_hi = 1.4;
    s.payoff = ReducedPayoff::markovian1d([](double x) { return std::abs(x); });
    const UvmPrice priced = price_direct(s, kZero, 1.0 / 200);

    LatticePolicy high;
    high.drift = [](double, double) { return 0.0; };
    high.vol_sq = [&s](double, double) { return s.sigma_hi * s.sigma_hi; };
    high.discount = [&s](double, double) { return s.r; };
    const McResult up = mc_superhedge_lb(s, kZero, high, 40000, 5e-4, 2024, 2);
    CHECK(std::abs(up.estimate - priced.price) <= 3.0 * up.std_error + 2e-3);

    LatticePolicy low = high;
    low.vol_sq = [&s](double, double) { return s.sigma_lo * s.sigma_lo; };
    const McResult dn = mc_superhedge_lb(s, kZero, low, 40000, 5e-4, 2025, 2);
    CHECK(dn.estimate < priced.price - 3.0 * dn.std_error);
    CHECK(dn.estimate <= priced.price + 3.0 * dn.std_error);

    // Degenerate band: a single admissible measure, so the simulation
    // reproduces the dynamic-programming value.
    const UvmSpec deg = collapsed_spec();
    const UvmPrice deg_priced = price_direct(deg, kZero, 1.0 / 200);
    LatticePolicy only;
    only.drift = [](double, double) { return 0.0; };
    only.vol_sq = [](double, double) { return 2.0; };
    only.discount = [](double, double) { return 1.0; };
    const McResult dm = mc_superhedge_lb(deg, kZero, only, 40000, 5e-4, 2026, 2);
    CHECK(std::abs(dm.estimate - deg_priced.price) <= 3.0 * dm.std_error + 1e-3);
}

TEST_CASE("extract_worst_case: argmax policy and martingale residual") {
    UvmSpec s = collapsed_spec();
    s.sigma_lo = 1.0;
    s.sigma_hi = 1.4;
    s.payoff = ReducedPayoff::markovian1d([](double x) { return std::abs(x); });  // convex
    const UvmPrice priced = price_direct(s, kZero, 1.0 / 200);
    const WorstCase wc = extract_worst_case(s, priced, kZero, 4000, 1e-3, 31);
    for (double x : {-0.6, -0.2, 0.0, 0.3, 0.7}) {
        CHECK(wc.policy.vol_sq(x, 0.0) == doctest::Approx(s.sigma_hi * s.sigma_hi));
    }
    CHECK(wc.martingale_residual <= 3.0);

    // Mirror case: a negative payoff makes the value concave, so the argmax
    // flips to the lower band. (On an interval the payoff enters only
    // through its boundary values, so the sign of the value is what counts.)
    UvmSpec c = s;
    c.payoff = ReducedPayoff::constant(-1.0);
    const UvmPrice priced_c = price_direct(c, kZero, 1.0 / 200);
    const WorstCase wc_c = extract_worst_case(c, priced_c, kZero, 4000, 1e-3, 32);
    for (double x : {-0.6, -0.2, 0.3, 0.7}) {
        CHECK(wc_c.policy.vol_sq(x, 0.0) == doctest::Approx(s.sigma_lo * s.sigma_lo));
    }

    // Degenerate band: residual vanishes statistically.
    const UvmPrice priced_d = price_direct(collapsed_spec(), kZero, 1.0 / 200);
    const WorstCase wc_d = extract_worst_case(collapsed_spec(), priced_d, kZero, 4000, 1e-3, 33);
    CHECK(wc_d.martingale_residual <= 3.0);
}

TEST_CASE("lookback payoff via the running-max state") {
    UvmSpec s = collapsed_spec();
    s.payoff = ReducedPayoff::running_max_abs([](double m) { return m; });
    const UvmPrice p = price_direct(s, kZero, 1.0 / 50);
    // The exit pins the running max at 1, discounted at the exit time.
    UvmSpec ref = collapsed_spec();
    ref.payoff = ReducedPayoff::constant(1.0);
    const UvmPrice q = price_direct(ref, kZero, 1.0 / 50);
    CHECK(p.price == doctest::Approx(q.price).epsilon(1e-9));

    // A peaked history raises the floor of the payoff.
    const PiecewisePath peaked = lin_interp({{1.0, 0.75}, {2.0, 0.0}});
    const UvmPrice pk = price_direct(s, peaked, 1.0 / 50);
    CHECK(pk.price >= 0.75 / std::cosh(1.0) - 1e-6);
    CHECK(pk.price >= p.price * 0.75 - 1e-9);
}
