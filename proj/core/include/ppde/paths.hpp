#pragma once

#include "ppde/util.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ppde {

/// A continuous path that is piecewise linear between breakpoints and
/// constant after the last one (flat tail). Paths are immutable after
/// construction; all operations return new values.
class PiecewisePath {
public:
    struct Breakpoint {
        double time;
        VecD value;
    };

    /// Constant-zero path in the given dimension.
    explicit PiecewisePath(int dim);

    /// Breakpoints must start at (0, origin) with strictly increasing times.
    PiecewisePath(int dim, std::vector<Breakpoint> breakpoints);

    int dim() const { return dim_; }
    const std::vector<Breakpoint>& breakpoints() const { return breakpoints_; }

    /// Value at time t (flat extension beyond the last breakpoint).
    VecD at(double t) const;

    /// Time after which the path stays constant.
    double bar_t() const;

    VecD final_value() const;

    /// sup_t |path(t)|; attained at a breakpoint since segments are linear.
    double max_norm() const;

    bool is_constant_zero(double tol = 0.0) const;

private:
    int dim_;
    std::vector<Breakpoint> breakpoints_;
};

/// Builds the linear interpolation through the given (time, value) points
/// with a flat tail; prepends (0, origin) when missing. Non-increasing
/// times are rejected.
PiecewisePath lin_interp(int dim, const std::vector<std::pair<double, VecD>>& points);

/// 1-d convenience overload.
PiecewisePath lin_interp(const std::vector<std::pair<double, double>>& points);

/// Normal form of the time-reparameterization equivalence class: interior
/// collinear breakpoints and interior plateaus removed, breakpoint times
/// renumbered 0..n, trailing repeats collapsed into the flat tail.
/// Idempotent; the result is at pseudo-metric distance 0 from the input.
PiecewisePath canonicalize(const PiecewisePath& p);

/// Discrete Frechet distance between the two polylines after uniform
/// refinement to edge length <= mesh, flat tails collapsed to one matched
/// endpoint each. Upper bound on the reparameterization pseudo-metric,
/// exact when an optimal alignment visits only breakpoints; one-sided
/// error O(mesh).
double de_distance(const PiecewisePath& p, const PiecewisePath& q, double mesh);

/// Concatenation at bar_t(history): the tail is shifted to start at the
/// history's final value. Result is canonical. The zero path is a left
/// identity.
PiecewisePath concat(const PiecewisePath& history, const PiecewisePath& tail);

/// Least concave nondecreasing majorant of a sample cloud of
/// (distance, value-gap) pairs; the empirical stand-in for a modulus of
/// continuity.
class ModulusFit {
public:
    ModulusFit() = default;

    /// Hull knots in increasing x; evaluation is linear between knots and
    /// flat beyond the last.
    const std::vector<std::pair<double, double>>& knots() const { return knots_; }

    double operator()(double x) const;

    bool dominates(const std::vector<std::pair<double, double>>& samples, double tol = 0.0) const;

    friend ModulusFit fit_modulus(const std::vector<std::pair<double, double>>& samples);

private:
    std::vector<std::pair<double, double>> knots_;
};

/// Fits the least concave nondecreasing majorant; samples must have
/// nonnegative coordinates. The envelope is anchored at
/// (0, max sample value at distance 0), so it vanishes at 0 unless the data
/// forbid it.
ModulusFit fit_modulus(const std::vector<std::pair<double, double>>& samples);

/// JSON wire format {"dim": d, "breakpoints": [[t, [x1..xd]], ...]}.
/// The reader canonicalizes on load.
std::string path_to_json(const PiecewisePath& p);
PiecewisePath path_from_json(const std::string& text);

}  // namespace ppde
