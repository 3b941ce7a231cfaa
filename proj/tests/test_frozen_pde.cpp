#include "ppde/frozen_pde.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ppde;

namespace {

FrozenProblem heat_problem(double va, double vb, double h = 0.01) {
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.generator = linear_generator(1, 0.0, 0.0, 1.0);  // G = gamma/2
    p.boundary_data = {{-1.0, va}, {1.0, vb}};
    p.h = h;
    return p;
}

}  // namespace

TEST_CASE("heat equation: constants and linear data are exact") {
    const ValueField c = solve_dirichlet(heat_problem(0.7, 0.7));
    for (double v : c.values) CHECK(v == doctest::Approx(0.7));

    const ValueField lin = solve_dirichlet(heat_problem(0.0, 1.0));
    for (std::size_t i = 0; i < lin.xs.size(); ++i) {
        CHECK(lin.values[i] == doctest::Approx((lin.xs[i] + 1.0) / 2.0).epsilon(1e-9));
    }
    CHECK(lin.values.front() == doctest::Approx(0.0));  // boundary attained exactly
    CHECK(lin.values.back() == doctest::Approx(1.0));
}

TEST_CASE("upper-bound generator solve matches its lattice representation") {
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.generator = make_g_upper(1, 1.0, 1.0);
    p.boundary_data = {{-1.0, 0.0}, {1.0, 0.0}};
    p.h = 1.0 / 200;
    const ValueField v = solve_dirichlet(p);

    ControlBounds b = ControlBounds::canonical(1.0);
    LatticeModel model(p.domain, p.h, b, ControlLattice::from_bounds(b));
    const LatticeField w =
        sup_expectation(model, ReducedPayoff::constant(0.0), p.domain, 1.0, PiecewisePath(1));
    // Same one-step operator on the same grid: the two routes coincide.
    for (std::size_t i = 0; i < v.xs.size(); ++i) {
        CHECK(v.values[i] == doctest::Approx(w.values[i]).epsilon(1e-9));
    }
    // And the discount control b = 0 makes this the exit-time value.
    CHECK(std::abs(v.eval(0.0) - (std::exp(1.0) - 2.0)) <= 3.0 * p.h);
}

TEST_CASE("general-generator relaxation agrees with the control form") {
    // Same nonlinearity given twice: once with its control form, once raw.
    const GeneratorSpec with_form = uvm_generator(0.8, 0.0, 1.0, 1.4);
    GeneratorSpec raw = with_form;
    raw.hjb.reset();

    FrozenProblem p;
    p.domain = ConvexDomain::interval(-0.5, 0.5);
    p.boundary_data = {{-0.5, 0.3}, {0.5, 1.1}};
    p.h = 1.0 / 100;

    p.generator = with_form;
    const ValueField a = solve_dirichlet(p);
    p.generator = raw;
    const ValueField b = solve_dirichlet(p);
    CHECK(b.residual_norm <= 1e-9);
    for (std::size_t i = 0; i < a.xs.size(); ++i) {
        CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(5e-4));
    }
}

TEST_CASE("solution ordering under generator dominance") {
    const double L0 = 1.0, C0 = 0.5;
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.boundary_data = {{-1.0, 0.2}, {1.0, -0.1}};
    p.h = 1.0 / 100;

    p.generator = make_g_lower(1, L0, C0);
    const ValueField lo = solve_dirichlet(p);
    p.generator = uvm_generator(0.5, 0.3, std::sqrt(2.0 / L0), std::sqrt(2.0 * L0));
    p.generator.bound_const = C0;
    const ValueField mid = solve_dirichlet(p);
    p.generator = make_g_upper(1, L0, C0);
    const ValueField hi = solve_dirichlet(p);

    for (std::size_t i = 0; i < lo.xs.size(); ++i) {
        CHECK(lo.values[i] <= mid.values[i] + 1e-9);
        CHECK(mid.values[i] <= hi.values[i] + 1e-9);
    }

    // Boundedness: |v| <= lambda^{-1}(C0) + C0 + boundary sup.
    const double bound = mid.problem.generator.lambda_inv(C0) + C0 + 0.2;
    for (double v : mid.values) CHECK(std::abs(v) <= bound + 1e-9);
}

TEST_CASE("discrete comparison principle on random boundary pairs") {
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.generator = make_g_upper(1, 1.0, 0.5);
    p.h = 1.0 / 50;
    for (int it = 0; it < 20; ++it) {
        const double a1 = u(rng), b1 = u(rng);
        p.boundary_data = {{-1.0, a1}, {1.0, b1}};
        const ValueField v1 = solve_dirichlet(p);
        p.boundary_data = {{-1.0, a1 - std::abs(u(rng))}, {1.0, b1 - std::abs(u(rng))}};
        const ValueField v2 = solve_dirichlet(p);
        for (std::size_t i = 0; i < v1.xs.size(); ++i) {
            CHECK(v2.values[i] <= v1.values[i] + 1e-10);
        }
    }
}

TEST_CASE("comparison_gap verifies the ball estimate") {
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.generator = make_g_upper(1, 1.0, 0.5);
    p.h = 1.0 / 100;
    p.boundary_data = {{-1.0, 0.4}, {1.0, 0.2}};
    const ValueField v1 = solve_dirichlet(p);

    const ComparisonReport zero_rep = comparison_gap(v1, v1, ControlBounds::canonical(1.0));
    CHECK(zero_rep.max_violation <= 1e-12);
    for (double g : zero_rep.gap) CHECK(g == doctest::Approx(0.0));

    p.boundary_data = {{-1.0, 0.4 - 0.25}, {1.0, 0.2}};
    const ValueField v2 = solve_dirichlet(p);
    const ComparisonReport rep = comparison_gap(v1, v2, ControlBounds::canonical(1.0));
    CHECK(rep.ok(1e-9));

    const ComparisonReport mirror = comparison_gap(v2, v1, ControlBounds::canonical(1.0));
    CHECK(mirror.ok(1e-9));
}

TEST_CASE("classify_boundary: sphere, clipped wall, corner tie") {
    const ConvexDomain Q = ConvexDomain::interval(-1.0, 1.0);
    const PiecewisePath centered(1);
    CHECK(classify_boundary(0.25, Q, centered, 0.25) == BoundaryClass::OuterSphere);
    CHECK(classify_boundary(0.25, Q, centered, -0.25) == BoundaryClass::OuterSphere);

    const PiecewisePath near_wall = lin_interp({{1.0, 0.75}});
    CHECK(classify_boundary(0.5, Q, near_wall, 0.25) == BoundaryClass::DomainBoundary);
    CHECK(classify_boundary(0.5, Q, near_wall, -0.5) == BoundaryClass::OuterSphere);

    // Corner: |x| = eps exactly on the shifted wall.
    const PiecewisePath corner = lin_interp({{1.0, 0.5}});
    CHECK(classify_boundary(0.5, Q, corner, 0.5) == BoundaryClass::DomainBoundary);

    CHECK_THROWS_AS(classify_boundary(0.25, Q, centered, 0.1), ConfigError);
}

TEST_CASE("halving h shrinks the gap to the closed form") {
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.generator = make_g_upper(1, 1.0, 1.0);
    p.boundary_data = {{-1.0, 0.0}, {1.0, 0.0}};
    const double truth = std::exp(1.0) - 2.0;
    p.h = 1.0 / 50;
    const double e1 = std::abs(solve_dirichlet(p).eval(0.0) - truth);
    p.h = 1.0 / 100;
    const double e2 = std::abs(solve_dirichlet(p).eval(0.0) - truth);
    CHECK(e2 <= 0.75 * e1);  // at least first-order decay
}

TEST_CASE("solver diagnostics are populated") {
    const ValueField v = solve_dirichlet(heat_problem(0.0, 1.0, 0.05));
    CHECK(v.iterations >= 1);
    CHECK(v.residual_norm <= 1e-9);
    CHECK(v.diagnostics_json().find("residual_history") != std::string::npos);
    CHECK(v.to_csv().rfind("x,value", 0) == 0);

    FrozenProblem bad = heat_problem(0.0, 1.0);
    bad.boundary_data = {{-1.0, 0.0}};
    CHECK_THROWS_AS(solve_dirichlet(bad), ConfigError);
}
