#include "ppde/paths.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ppde;

namespace {

// Independent top-down discrete Frechet oracle over breakpoint vertices.
double frechet_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<std::vector<double>> memo(a.size(), std::vector<double>(b.size(), -1.0));
    std::function<double(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> double {
        if (memo[i][j] >= 0.0) return memo[i][j];
        const double d = std::abs(a[i] - b[j]);
        double r;
        if (i == 0 && j == 0) r = d;
        else if (i == 0) r = std::max(go(0, j - 1), d);
        else if (j == 0) r = std::max(go(i - 1, 0), d);
        else r = std::max(std::min({go(i - 1, j), go(i, j - 1), go(i - 1, j - 1)}), d);
        return memo[i][j] = r;
    };
    return go(a.size() - 1, b.size() - 1);
}

PiecewisePath random_path(std::mt19937_64& rng, int max_segments = 4) {
    std::uniform_int_distribution<int> nseg(0, max_segments);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    const int n = nseg(rng);
    for (int i = 1; i <= n; ++i) pts.emplace_back(static_cast<double>(i), gauss(rng));
    return lin_interp(pts);
}

}  // namespace

TEST_CASE("lin_interp basic shapes") {
    const PiecewisePath p = lin_interp({{1.0, 2.0}});
    CHECK(p.breakpoints().size() == 2);
    CHECK(p.final_value()[0] == doctest::Approx(2.0));
    CHECK(p.at(0.5)[0] == doctest::Approx(1.0));
    CHECK(p.at(10.0)[0] == doctest::Approx(2.0));  // flat tail

    const PiecewisePath p2 = lin_interp({{1.0, 0.3}, {2.0, -0.7}});
    CHECK(p2.breakpoints().size() == 3);
    CHECK(p2.bar_t() == doctest::Approx(2.0));

    const PiecewisePath empty = lin_interp({});
    CHECK(empty.is_constant_zero());
    CHECK(empty.bar_t() == 0.0);

    CHECK_THROWS_AS(lin_interp({{2.0, 1.0}, {1.0, 2.0}}), ConfigError);
    CHECK_THROWS_AS(lin_interp({{1.0, 1.0}, {1.0, 2.0}}), ConfigError);
}

TEST_CASE("canonicalize removes collinear points and renumbers times") {
    const PiecewisePath p = canonicalize(lin_interp({{1.0, 1.0}, {2.0, 2.0}}));
    REQUIRE(p.breakpoints().size() == 2);
    CHECK(p.breakpoints()[1].time == doctest::Approx(1.0));
    CHECK(p.breakpoints()[1].value[0] == doctest::Approx(2.0));

    // Reparameterized pair collapses to the same normal form.
    const PiecewisePath a = canonicalize(lin_interp({{0.5, 1.0}, {7.0, -2.0}}));
    const PiecewisePath b = canonicalize(lin_interp({{1.0, 1.0}, {2.0, -2.0}}));
    REQUIRE(a.breakpoints().size() == b.breakpoints().size());
    for (std::size_t i = 0; i < a.breakpoints().size(); ++i) {
        CHECK(a.breakpoints()[i].time == doctest::Approx(b.breakpoints()[i].time));
        CHECK(a.breakpoints()[i].value[0] == doctest::Approx(b.breakpoints()[i].value[0]));
    }

    const PiecewisePath zero(1);
    const PiecewisePath zc = canonicalize(zero);
    CHECK(zc.is_constant_zero());

    // Idempotent.
    const PiecewisePath q = lin_interp({{1.0, 1.0}, {2.0, 1.0}, {3.0, -1.0}});
    const PiecewisePath c1 = canonicalize(q);
    const PiecewisePath c2 = canonicalize(c1);
    REQUIRE(c1.breakpoints().size() == c2.breakpoints().size());
    for (std::size_t i = 0; i < c1.breakpoints().size(); ++i) {
        CHECK(c1.breakpoints()[i].value[0] == doctest::Approx(c2.breakpoints()[i].value[0]));
    }
}

TEST_CASE("de_distance identities") {
    const PiecewisePath p = lin_interp({{1.0, 2.0}, {2.0, 1.0}});
    CHECK(de_distance(p, p, 0.05) == doctest::Approx(0.0));

    // Distance to the zero path is the maximum norm.
    const PiecewisePath zero(1);
    CHECK(de_distance(p, zero, 0.05) == doctest::Approx(2.0));

    const PiecewisePath up = lin_interp({{1.0, 1.0}});
    const PiecewisePath dn = lin_interp({{1.0, -1.0}});
    const double d = de_distance(up, dn, 0.05);
    CHECK(d == doctest::Approx(2.0));
    // Independent oracle on the refined vertex sequences.
    CHECK(d == doctest::Approx(frechet_oracle({0, 0.5, 1}, {0, -0.5, -1})));

    CHECK_THROWS_AS(de_distance(p, PiecewisePath(2), 0.1), ConfigError);
}

TEST_CASE("de_distance pseudo-metric properties on random triples") {
    std::mt19937_64 rng(2024);
    const double mesh = 0.02;
    for (int it = 0; it < 100; ++it) {
        const PiecewisePath a = random_path(rng);
        const PiecewisePath b = random_path(rng);
        const PiecewisePath c = random_path(rng);
        const double dab = de_distance(a, b, mesh);
        const double dba = de_distance(b, a, mesh);
        CHECK(dab == doctest::Approx(dba));  // symmetry is exact
        const double dac = de_distance(a, c, mesh);
        const double dcb = de_distance(c, b, mesh);
        CHECK(dab <= dac + dcb + 2 * mesh + 1e-12);
    }
}

TEST_CASE("de_distance dominates the endpoint and max-norm gaps") {
    std::mt19937_64 rng(99);
    for (int it = 0; it < 50; ++it) {
        const PiecewisePath a = random_path(rng);
        const PiecewisePath b = random_path(rng);
        const double d = de_distance(a, b, 0.02);
        CHECK(std::abs(a.final_value()[0] - b.final_value()[0]) <= d + 1e-9);
        CHECK(std::abs(a.max_norm() - b.max_norm()) <= d + 1e-9);
    }
}

TEST_CASE("canonicalize stays in the equivalence class") {
    std::mt19937_64 rng(7);
    for (int it = 0; it < 30; ++it) {
        const PiecewisePath p = random_path(rng);
        CHECK(de_distance(canonicalize(p), p, 0.02) <= 0.02 + 1e-12);
    }
}

TEST_CASE("concat semantics") {
    const PiecewisePath zero(1);
    const PiecewisePath q = lin_interp({{1.0, 0.5}, {2.0, -0.25}});
    const PiecewisePath r = concat(zero, q);
    CHECK(de_distance(r, q, 0.01) <= 1e-9);  // left identity

    // Increments add up: two unit rises concatenate to one rise of two.
    const PiecewisePath one = lin_interp({{1.0, 1.0}});
    const PiecewisePath two = concat(one, one);
    CHECK(two.final_value()[0] == doctest::Approx(2.0));
    CHECK(two.breakpoints().size() == 2);  // canonical: collinear midpoint removed

    // Skeleton extension: the new point lands after the last breakpoint.
    const PiecewisePath pi2 = lin_interp({{1.0, 0.3}, {2.0, -0.1}});
    const PiecewisePath ext = concat(pi2, lin_interp({{1.0, 0.7}}));
    CHECK(ext.final_value()[0] == doctest::Approx(0.6));
    CHECK(ext.bar_t() == doctest::Approx(3.0));
}

TEST_CASE("concat is associative up to equivalence") {
    std::mt19937_64 rng(31);
    for (int it = 0; it < 20; ++it) {
        const PiecewisePath a = random_path(rng, 2);
        const PiecewisePath b = random_path(rng, 2);
        const PiecewisePath c = random_path(rng, 2);
        const PiecewisePath lhs = concat(concat(a, b), c);
        const PiecewisePath rhs = concat(a, concat(b, c));
        CHECK(de_distance(lhs, rhs, 0.01) <= 1e-9);
    }
}

TEST_CASE("fit_modulus builds the least concave nondecreasing majorant") {
    const ModulusFit f1 = fit_modulus({{0.0, 0.0}, {1.0, 1.0}});
    CHECK(f1(1.0) == doctest::Approx(1.0));
    CHECK(f1(0.0) == doctest::Approx(0.0));

    const ModulusFit f2 = fit_modulus({{1.0, 1.0}, {2.0, 1.0}});
    CHECK(f2(1.0) == doctest::Approx(1.0));
    CHECK(f2(2.0) == doctest::Approx(1.0));
    CHECK(f2(1.5) == doctest::Approx(1.0));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0.0, 2.0);
    std::vector<std::pair<double, double>> samples;
    for (int i = 0; i < 200; ++i) {
        const double x = ux(rng);
        samples.emplace_back(x, std::sqrt(x) * (0.5 + 0.5 * ux(rng) / 2.0));
    }
    const ModulusFit f3 = fit_modulus(samples);
    CHECK(f3.dominates(samples, 1e-12));
    // Concavity: midpoint above the chord on the knot range.
    const auto& k = f3.knots();
    for (std::size_t i = 1; i < k.size(); ++i) {
        const double xm = 0.5 * (k[i - 1].first + k[i].first);
        CHECK(f3(xm) >= 0.5 * (f3(k[i - 1].first) + f3(k[i].first)) - 1e-12);
    }

    CHECK_THROWS_AS(fit_modulus({{-1.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(fit_modulus({}), ConfigError);
}

TEST_CASE("path JSON round trip canonicalizes") {
    const PiecewisePath p = lin_interp({{0.5, 1.0}, {7.0, 2.0}});
    const PiecewisePath q = path_from_json(path_to_json(p));
    CHECK(q.dim() == 1);
    CHECK(de_distance(p, q, 0.01) <= 1e-9);
    CHECK(q.breakpoints()[1].time == doctest::Approx(1.0));  // canonical times
    CHECK_THROWS_AS(path_from_json("{"), ConfigError);
    CHECK_THROWS_AS(path_from_json("{\"dim\": 1}"), ConfigError);
}
