#pragma once

#include "ppde/paths.hpp"
#include "ppde/util.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// First exit of a path from a domain. crossed_face indexes the violated
/// constraint (half-spaces first, then ball constraints).
struct ExitRecord {
    std::optional<double> exit_time;
    std::optional<VecD> exit_point;
    std::optional<int> crossed_face;

    bool exited() const { return exit_time.has_value(); }
};

/// Open bounded convex set containing the origin. Constructed from one of
/// the supported kinds (interval, ball, box, h-polytope); intersections and
/// shifts stay representable as constraint lists.
class ConvexDomain {
public:
    struct Halfspace {
        VecD normal;    // constraint normal . x < offset
        double offset;
    };
    struct BallConstraint {
        VecD center;    // constraint |x - center| < radius
        double radius;
    };

    static ConvexDomain interval(double a, double b);
    static ConvexDomain ball(int dim, double radius);
    static ConvexDomain box(const VecD& half_widths);
    static ConvexDomain h_polytope(int dim, std::vector<Halfspace> faces);

    int dim() const { return dim_; }
    const std::string& kind() const { return kind_; }
    const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }
    const std::vector<BallConstraint>& balls() const { return balls_; }

    /// Strict membership; boundary points are outside.
    bool contains(const VecD& x) const;

    bool on_boundary(const VecD& x, double tol = 1e-9) const;

    /// D - x; requires contains(x).
    ConvexDomain shift(const VecD& x) const;

    ConvexDomain intersect(const ConvexDomain& other) const;

    /// Radius of a ball around the origin guaranteed to contain the domain.
    double bounding_radius() const;

    /// Endpoints (a, b) for one-dimensional domains.
    std::pair<double, double> interval_bounds() const;

    /// Exact first crossing time of a piecewise-linear path, computed
    /// segment by segment (linear or quadratic scalar roots, bisection
    /// polished). No exit if the path and its flat tail stay inside.
    ExitRecord exit_time(const PiecewisePath& p) const;

    std::string to_json() const;
    static ConvexDomain from_json(const std::string& text);

private:
    ConvexDomain(int dim, std::string kind) : dim_(dim), kind_(std::move(kind)) {}
    void validate() const;

    int dim_;
    std::string kind_;
    std::vector<Halfspace> halfspaces_;
    std::vector<BallConstraint> balls_;
};

/// Successive exit times h_1..h_n of the increment path: h_{i+1} is the
/// first time the increment since h_i leaves O. Stops early when the flat
/// tail is reached.
std::vector<double> cascade_times(const ConvexDomain& O, const PiecewisePath& p, int n);

/// Localized domain ball(eps) intersect (Q - final value of history);
/// requires the history to end strictly inside Q.
ConvexDomain eps_localized(double eps, const ConvexDomain& Q, const PiecewisePath& history);

}  // namespace ppde
