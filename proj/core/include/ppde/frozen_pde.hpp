#pragma once

#include "ppde/domains.hpp"
#include "ppde/generators.hpp"
#include "ppde/lattice.hpp"
#include "ppde/paths.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// Elliptic Dirichlet problem with the path argument of the generator held
/// fixed at frozen_path. One-dimensional interval domains only.
struct FrozenProblem {
    PiecewisePath frozen_path{1};
    ConvexDomain domain = ConvexDomain::interval(-1.0, 1.0);
    GeneratorSpec generator;
    std::map<double, double> boundary_data;  // value at each interval endpoint
    double h = 1e-2;
    /// Optional one-step data shared with a surrounding lattice so nested
    /// solves compose exactly; defaults to the CFL step of the generator's
    /// own bands.
    std::optional<double> dt = std::nullopt;
    std::optional<ControlBounds> dt_bounds = std::nullopt;
};

/// Solved nodal field with diagnostics. Boundary nodes carry the Dirichlet
/// data exactly.
struct ValueField {
    std::vector<double> xs;
    std::vector<double> values;
    std::vector<int> control_index;   // argmax control per node for HJB forms, -1 otherwise
    ControlLattice controls;
    double h = 0.0;
    double dt = 0.0;
    double residual_norm = 0.0;       // solved-scheme residual, sup over nodes
    int iterations = 0;
    std::vector<double> residual_history;
    FrozenProblem problem;            // kept for residual evaluation and reporting

    double eval(double x) const;
    std::string to_csv() const;
    std::string diagnostics_json() const;
};

/// Monotone finite-difference solve of -G(omega, v, Dv, D^2v) = 0.
/// Generators carrying an exact control form are solved by policy
/// iteration on the upwind trinomial stationarity equations (the same
/// one-step operator the lattice uses, so nested solves satisfy the exact
/// discrete tower property). General generators use a nodewise damped
/// fixed-point relaxation that exploits monotonicity in y; it requires
/// h <= 2/L0^2 so central differences stay monotone.
ValueField solve_dirichlet(const FrozenProblem& problem);

/// Signed residuals -G(omega, v_i, Dv_i, D^2v_i) of a nodal field under a
/// given generator (central differences; interior nodes).
std::vector<double> fd_residuals(const GeneratorSpec& G, const ValueField& field);

struct ComparisonReport {
    double max_violation = 0.0;          // max over nodes of (v1-v2) - bound
    double generator_distance = 0.0;     // sampled sup |G1 - G2|
    std::vector<double> bound;           // nodewise right side
    std::vector<double> gap;             // nodewise v1 - v2
    bool ok(double tol) const { return max_violation <= tol; }
};

/// Verifies the ball comparison estimate: nodewise
///   (v1 - v2)(x) <= sup-expectation of the positive boundary gap
///                   (+ expected-exit-time times sup|G1-G2| when the frozen
///                    paths differ),
/// with the right side computed by the lattice on the same grid.
ComparisonReport comparison_gap(const ValueField& v1, const ValueField& v2,
                                const ControlBounds& bounds);

enum class BoundaryClass { OuterSphere, DomainBoundary };

/// Classifies an endpoint of the localized domain ball(eps) cap Q^history:
/// OuterSphere iff |x| = eps within tolerance and x is strictly inside the
/// shifted domain; corner ties count as DomainBoundary.
BoundaryClass classify_boundary(double eps, const ConvexDomain& Q, const PiecewisePath& history,
                                double x, double tol = 1e-9);

}  // namespace ppde
