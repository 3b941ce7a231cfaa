#include "ppde/frozen_pde.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ppde {

namespace {

constexpr double kResidualTol = 1e-9;

ControlBounds bounds_of_form(const HjbForm& f) {
    ControlBounds b;
    const auto [dmin, dmax] = std::minmax_element(f.drifts.begin(), f.drifts.end());
    b.drift_bound = std::max(std::abs(*dmin), std::abs(*dmax));
    const auto [vmin, vmax] = std::minmax_element(f.vol_sqs.begin(), f.vol_sqs.end());
    b.vol_sq_lo = *vmin;
    b.vol_sq_hi = *vmax;
    const auto [bmin, bmax] = std::minmax_element(f.discounts.begin(), f.discounts.end());
    b.discount_lo = *bmin;
    b.discount_hi = *bmax;
    return b;
}

double boundary_value(const std::map<double, double>& data, double x) {
    double best = 0.0;
    double err = std::numeric_limits<double>::infinity();
    for (const auto& [bx, bv] : data) {
        const double e = std::abs(bx - x);
        if (e < err) {
            err = e;
            best = bv;
        }
    }
    return best;
}

ValueField solve_hjb(const FrozenProblem& p) {
    const HjbForm& form = *p.generator.hjb;
    ControlBounds bounds = p.dt_bounds.value_or(bounds_of_form(form));
    LatticeModel model(p.domain, p.h, bounds, ControlLattice::from_hjb(form), p.dt);

    ReducedPayoff boundary = ReducedPayoff::markovian1d(
        [data = p.boundary_data](double x) { return boundary_value(data, x); });
    const PiecewisePath origin(1);
    LatticeField f = form.is_sup
                         ? sup_expectation(model, boundary, p.domain, form.running_reward, origin)
                         : inf_expectation(model, boundary, p.domain, form.running_reward, origin);

    ValueField out;
    out.xs = f.xs;
    out.values = f.values;
    out.control_index = f.control_index;
    out.controls = model.controls();
    out.h = f.h;
    out.dt = f.dt;
    out.residual_norm = f.residual_norm;
    out.iterations = f.iterations;
    out.residual_history = {f.residual_norm};
    out.problem = p;
    return out;
}

// Nodewise damped relaxation for a general generator: each sweep solves the
// scalar equation G(omega, t, Dv, D^2v(t)) = 0 at every interior node by a
// guarded Newton step (G is strictly decreasing in the node value through
// both y and the second difference, so the root is unique).
ValueField solve_general(const FrozenProblem& p) {
    const double L0 = p.generator.lip_const;
    if (p.h > 2.0 / (L0 * L0) + 1e-12) {
        throw ConfigError("solve_dirichlet: h must be <= 2/L0^2 for the monotone central scheme");
    }
    auto [a, b] = p.domain.interval_bounds();
    const int n = std::max(2, static_cast<int>(std::llround((b - a) / p.h)));
    const double h = (b - a) / n;

    std::vector<double> xs(n + 1);
    for (int i = 0; i <= n; ++i) xs[i] = a + i * h;
    xs.back() = b;

    std::vector<double> v(n + 1);
    const double va = boundary_value(p.boundary_data, a);
    const double vb = boundary_value(p.boundary_data, b);
    for (int i = 0; i <= n; ++i) v[i] = va + (vb - va) * static_cast<double>(i) / n;

    const auto& G = p.generator;
    const PiecewisePath& w = p.frozen_path;
    auto g_at = [&](int i, double t) {
        const double z = (v[i + 1] - v[i - 1]) / (2.0 * h);
        const double gam = (v[i + 1] - 2.0 * t + v[i - 1]) / (h * h);
        return G.eval1d(w, t, z, gam);
    };

    std::vector<double> history;
    int iterations = 0;
    const long max_sweeps = 200000;
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        for (int i = 1; i < n; ++i) {
            // One guarded Newton step toward the nodal root; monotonicity in
            // t makes a half-step damping safe.
            const double g0 = g_at(i, v[i]);
            const double eps = 1e-7 * (1.0 + std::abs(v[i]));
            const double slope = (g_at(i, v[i] + eps) - g0) / eps;  // < 0 by monotonicity
            double step = slope < -1e-12 ? -g0 / slope : g0 * h * h / (2.0 + h * h);
            step *= 0.5;
            const double cap = 10.0 * (1.0 + std::abs(v[i]));
            step = std::clamp(step, -cap, cap);
            v[i] += step;
            change = std::max(change, std::abs(step));
        }
        ++iterations;
        if ((sweep & 63) == 0 || change <= 1e-13) {
            double resid = 0.0;
            for (int i = 1; i < n; ++i) resid = std::max(resid, std::abs(g_at(i, v[i])));
            history.push_back(resid);
            if (resid <= kResidualTol) break;
        }
        if (sweep + 1 == max_sweeps) {
            throw NumericalError("solve_dirichlet: general-generator relaxation did not converge; last residuals: " +
                                 std::to_string(history.empty() ? -1.0 : history.back()));
        }
    }

    double resid = 0.0;
    for (int i = 1; i < n; ++i) resid = std::max(resid, std::abs(g_at(i, v[i])));

    ValueField out;
    out.xs = std::move(xs);
    out.values = std::move(v);
    out.control_index.assign(n + 1, -1);
    out.h = h;
    out.dt = 0.0;
    out.residual_norm = resid;
    out.iterations = iterations;
    out.residual_history = std::move(history);
    out.problem = p;
    return out;
}

}  // namespace

ValueField solve_dirichlet(const FrozenProblem& problem) {
    if (problem.domain.dim() != 1) throw ConfigError("solve_dirichlet: one-dimensional domains only");
    if (problem.boundary_data.size() < 2) throw ConfigError("solve_dirichlet: boundary data needed at both endpoints");
    if (problem.generator.hjb) return solve_hjb(problem);
    return solve_general(problem);
}

double ValueField::eval(double x) const {
    if (x <= xs.front()) return values.front();
    if (x >= xs.back()) return values.back();
    const double s = (x - xs.front()) / h;
    const int i = std::min(static_cast<int>(s), static_cast<int>(xs.size()) - 2);
    const double w = s - i;
    return (1.0 - w) * values[i] + w * values[i + 1];
}

std::string ValueField::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "x,value,control_index\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << xs[i] << "," << values[i] << "," << control_index[i] << "\n";
    }
    return os.str();
}

std::string ValueField::diagnostics_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["residual_norm"] = residual_norm;
    j["residual_history"] = residual_history;
    j["h"] = h;
    j["dt"] = dt;
    j["nodes"] = xs.size();
    return j.dump(2);
}

std::vector<double> fd_residuals(const GeneratorSpec& G, const ValueField& field) {
    const std::size_t n = field.xs.size();
    std::vector<double> r(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h = field.h;
        const double z = (field.values[i + 1] - field.values[i - 1]) / (2.0 * h);
        const double gam = (field.values[i + 1] - 2.0 * field.values[i] + field.values[i - 1]) / (h * h);
        r[i] = -G.eval1d(field.problem.frozen_path, field.values[i], z, gam);
    }
    return r;
}

ComparisonReport comparison_gap(const ValueField& v1, const ValueField& v2,
                                const ControlBounds& bounds) {
    if (v1.xs.size() != v2.xs.size() || std::abs(v1.h - v2.h) > 1e-12 ||
        std::abs(v1.xs.front() - v2.xs.front()) > 1e-12) {
        throw ConfigError("comparison_gap: fields live on different grids");
    }
    ComparisonReport rep;

    // Sampled sup-distance between the two frozen generators; zero when the
    // frozen paths coincide (the generator object is shared per problem).
    double dist = 0.0;
    const auto& p1 = v1.problem;
    const auto& p2 = v2.problem;
    if (de_distance(p1.frozen_path, p2.frozen_path, 0.25) > 1e-12) {
        auto rng = make_rng(777, 1);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int it = 0; it < 512; ++it) {
            const double y = gauss(rng), z = gauss(rng), gam = gauss(rng);
            dist = std::max(dist, std::abs(p1.generator.eval1d(p1.frozen_path, y, z, gam) -
                                           p2.generator.eval1d(p2.frozen_path, y, z, gam)));
        }
    }
    rep.generator_distance = dist;

    // Right side: sup-expectation of the positive boundary gap plus the
    // generator distance accrued as a running cost until the exit.
    const double a = v1.xs.front();
    const double b = v1.xs.back();
    const double gap_a = std::max(v1.values.front() - v2.values.front(), 0.0);
    const double gap_b = std::max(v1.values.back() - v2.values.back(), 0.0);
    LatticeModel model(v1.problem.domain, v1.h, bounds, ControlLattice::from_bounds(bounds));
    ReducedPayoff payoff = ReducedPayoff::markovian1d([a, b, gap_a, gap_b](double x) {
        return std::abs(x - a) <= std::abs(x - b) ? gap_a : gap_b;
    });
    LatticeField rhs = sup_expectation(model, payoff, v1.problem.domain, dist, PiecewisePath(1));

    rep.bound.resize(v1.xs.size());
    rep.gap.resize(v1.xs.size());
    for (std::size_t i = 0; i < v1.xs.size(); ++i) {
        rep.bound[i] = rhs.eval(v1.xs[i]);
        rep.gap[i] = v1.values[i] - v2.values[i];
        rep.max_violation = std::max(rep.max_violation, rep.gap[i] - rep.bound[i]);
    }
    return rep;
}

BoundaryClass classify_boundary(double eps, const ConvexDomain& Q, const PiecewisePath& history,
                                double x, double tol) {
    const ConvexDomain local = eps_localized(eps, Q, history);
    auto [lo, hi] = local.interval_bounds();
    if (std::abs(x - lo) > tol && std::abs(x - hi) > tol) {
        throw ConfigError("classify_boundary: x is not an endpoint of the localized domain");
    }
    const ConvexDomain shifted = Q.shift(history.final_value());
    const bool on_sphere = std::abs(std::abs(x) - eps) <= tol;
    const bool interior_of_Q = shifted.contains(scalar_vec(x)) && !shifted.on_boundary(scalar_vec(x), tol);
    if (on_sphere && interior_of_Q) return BoundaryClass::OuterSphere;
    return BoundaryClass::DomainBoundary;
}

}  // namespace ppde
