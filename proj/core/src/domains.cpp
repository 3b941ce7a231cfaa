#include "ppde/domains.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ppde {

namespace {

constexpr double kBoundaryTol = 1e-12;

// Signed slack of constraint i at x: negative inside, zero on the face.
double halfspace_slack(const ConvexDomain::Halfspace& hs, const VecD& x) {
    return hs.normal.dot(x) - hs.offset;
}

double ball_slack(const ConvexDomain::BallConstraint& bc, const VecD& x) {
    return (x - bc.center).norm() - bc.radius;
}

}  // namespace

ConvexDomain ConvexDomain::interval(double a, double b) {
    if (!(a < 0.0 && 0.0 < b)) throw ConfigError("interval must contain 0");
    ConvexDomain d(1, "interval");
    d.halfspaces_.push_back({scalar_vec(1.0), b});
    d.halfspaces_.push_back({scalar_vec(-1.0), -a});
    d.validate();
    return d;
}

ConvexDomain ConvexDomain::ball(int dim, double radius) {
    if (!(radius > 0.0)) throw ConfigError("ball radius must be positive");
    ConvexDomain d(dim, "ball");
    d.balls_.push_back({VecD::Zero(dim), radius});
    d.validate();
    return d;
}

ConvexDomain ConvexDomain::box(const VecD& half_widths) {
    const int dim = static_cast<int>(half_widths.size());
    ConvexDomain d(dim, "box");
    for (int k = 0; k < dim; ++k) {
        if (!(half_widths[k] > 0.0)) throw ConfigError("box half-widths must be positive");
        VecD e = VecD::Zero(dim);
        e[k] = 1.0;
        d.halfspaces_.push_back({e, half_widths[k]});
        d.halfspaces_.push_back({-e, half_widths[k]});
    }
    d.validate();
    return d;
}

ConvexDomain ConvexDomain::h_polytope(int dim, std::vector<Halfspace> faces) {
    ConvexDomain d(dim, "h-polytope");
    d.halfspaces_ = std::move(faces);
    for (auto& hs : d.halfspaces_) {
        if (hs.normal.size() != dim) throw ConfigError("h-polytope normal dimension mismatch");
        const double n = hs.normal.norm();
        if (n <= kBoundaryTol) throw ConfigError("h-polytope normal must be nonzero");
        hs.normal /= n;
        hs.offset /= n;
    }
    d.validate();
    return d;
}

void ConvexDomain::validate() const {
    const VecD zero = VecD::Zero(dim_);
    if (!contains(zero)) throw ConfigError("domain must contain the origin");
    if (!std::isfinite(bounding_radius())) throw ConfigError("domain must be bounded");
}

bool ConvexDomain::contains(const VecD& x) const {
    if (x.size() != dim_) throw ConfigError("contains: dimension mismatch");
    for (const auto& hs : halfspaces_) {
        if (halfspace_slack(hs, x) >= -kBoundaryTol * (1.0 + std::abs(hs.offset))) return false;
    }
    for (const auto& bc : balls_) {
        if (ball_slack(bc, x) >= -kBoundaryTol * (1.0 + bc.radius)) return false;
    }
    return true;
}

bool ConvexDomain::on_boundary(const VecD& x, double tol) const {
    bool touching = false;
    for (const auto& hs : halfspaces_) {
        const double s = halfspace_slack(hs, x);
        if (s > tol) return false;
        if (std::abs(s) <= tol) touching = true;
    }
    for (const auto& bc : balls_) {
        const double s = ball_slack(bc, x);
        if (s > tol) return false;
        if (std::abs(s) <= tol) touching = true;
    }
    return touching;
}

ConvexDomain ConvexDomain::shift(const VecD& x) const {
    if (!contains(x)) throw ConfigError("shift: point must lie inside the domain");
    ConvexDomain d(dim_, kind_);
    d.halfspaces_ = halfspaces_;
    d.balls_ = balls_;
    for (auto& hs : d.halfspaces_) hs.offset -= hs.normal.dot(x);
    for (auto& bc : d.balls_) bc.center -= x;
    return d;
}

ConvexDomain ConvexDomain::intersect(const ConvexDomain& other) const {
    if (other.dim_ != dim_) throw ConfigError("intersect: dimension mismatch");
    ConvexDomain d(dim_, "intersection");
    d.halfspaces_ = halfspaces_;
    d.balls_ = balls_;
    d.halfspaces_.insert(d.halfspaces_.end(), other.halfspaces_.begin(), other.halfspaces_.end());
    d.balls_.insert(d.balls_.end(), other.balls_.begin(), other.balls_.end());
    d.validate();
    return d;
}

double ConvexDomain::bounding_radius() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& bc : balls_) best = std::min(best, bc.center.norm() + bc.radius);
    if (std::isfinite(best)) return best;

    if (dim_ == 1) {
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (const auto& hs : halfspaces_) {
            if (hs.normal[0] > 0) hi = std::min(hi, hs.offset / hs.normal[0]);
            else lo = std::max(lo, hs.offset / hs.normal[0]);
        }
        return std::max(std::abs(lo), std::abs(hi));
    }

    // For boxes the face offsets bound every coordinate. For general
    // polytopes fall back to a direction sweep: sup of the support function
    // over sampled directions; infinite when some direction is unblocked.
    double r = 0.0;
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n_dirs = 64 * dim_;
    for (int it = 0; it < n_dirs; ++it) {
        VecD u(dim_);
        for (int k = 0; k < dim_; ++k) u[k] = gauss(rng);
        u.normalize();
        // Ray 0 + t*u: first halfspace hit bounds the support in direction u.
        double t = std::numeric_limits<double>::infinity();
        for (const auto& hs : halfspaces_) {
            const double du = hs.normal.dot(u);
            if (du > kBoundaryTol) t = std::min(t, hs.offset / du);
        }
        if (!std::isfinite(t)) return std::numeric_limits<double>::infinity();
        r = std::max(r, t);
    }
    return r * std::sqrt(static_cast<double>(dim_));
}

std::pair<double, double> ConvexDomain::interval_bounds() const {
    if (dim_ != 1) throw ConfigError("interval_bounds: domain is not one-dimensional");
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& hs : halfspaces_) {
        if (hs.normal[0] > 0) hi = std::min(hi, hs.offset / hs.normal[0]);
        else lo = std::max(lo, hs.offset / hs.normal[0]);
    }
    for (const auto& bc : balls_) {
        lo = std::max(lo, bc.center[0] - bc.radius);
        hi = std::min(hi, bc.center[0] + bc.radius);
    }
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < 0.0 && 0.0 < hi)) {
        throw NumericalError("interval_bounds: degenerate one-dimensional domain");
    }
    return {lo, hi};
}

namespace {

// First s in [0, 1] where the constraint is reached along a + s*(b - a), or
// nothing. A segment end within the boundary tolerance counts as a touch.
std::optional<double> halfspace_crossing(const ConvexDomain::Halfspace& hs, const VecD& a,
                                         const VecD& b) {
    const double sa = halfspace_slack(hs, a);
    const double sb = halfspace_slack(hs, b);
    const double tol = kBoundaryTol * (1.0 + std::abs(sa) + std::abs(sb));
    if (sb < -tol) return std::nullopt;
    if (sa >= -tol) return 0.0;
    // The slack is affine in s; the root is exact.
    return std::min(1.0, sa / (sa - sb));
}

std::optional<double> ball_crossing(const ConvexDomain::BallConstraint& bc, const VecD& a,
                                    const VecD& b) {
    const double sa = ball_slack(bc, a);
    const double sb = ball_slack(bc, b);
    const double tol = kBoundaryTol * (1.0 + bc.radius);
    if (sb < -tol) return std::nullopt;  // convex along the segment, max at the ends
    if (sa >= -tol) return 0.0;
    // Quadratic root of |a + s(b-a) - c|^2 = r^2, polished by bisection.
    const VecD d = b - a;
    const VecD e = a - bc.center;
    const double qa = d.squaredNorm();
    const double qb = 2.0 * d.dot(e);
    const double qc = e.squaredNorm() - bc.radius * bc.radius;
    const double disc = qb * qb - 4.0 * qa * qc;
    double s = 1.0;
    if (disc >= 0.0 && qa > 0.0) {
        const double root = (-qb + std::sqrt(disc)) / (2.0 * qa);
        if (root >= 0.0) s = std::min(1.0, root);
    }
    double lo = std::max(0.0, s - 1e-8), hi = std::min(1.0, s + 1e-8);
    if (ball_slack(bc, a + lo * d) >= 0.0 || ball_slack(bc, a + hi * d) < 0.0) {
        lo = 0.0;
        hi = 1.0;
    }
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ball_slack(bc, a + mid * d) < 0.0) lo = mid;
        else hi = mid;
    }
    return hi;
}

}  // namespace

ExitRecord ConvexDomain::exit_time(const PiecewisePath& p) const {
    if (p.dim() != dim_) throw ConfigError("exit_time: dimension mismatch");
    const auto& bps = p.breakpoints();

    auto check_segment = [&](const VecD& a, const VecD& b, double t0, double t1) -> std::optional<ExitRecord> {
        double best_s = std::numeric_limits<double>::infinity();
        int best_face = -1;
        int face = 0;
        for (const auto& hs : halfspaces_) {
            auto s = halfspace_crossing(hs, a, b);
            if (s && *s < best_s) {
                best_s = *s;
                best_face = face;
            }
            ++face;
        }
        for (const auto& bc : balls_) {
            auto s = ball_crossing(bc, a, b);
            if (s && *s < best_s) {
                best_s = *s;
                best_face = face;
            }
            ++face;
        }
        if (best_face < 0) return std::nullopt;
        ExitRecord r;
        r.exit_time = t0 + best_s * (t1 - t0);
        r.exit_point = a + best_s * (b - a);
        r.crossed_face = best_face;
        return r;
    };

    if (!contains(bps.front().value)) {
        ExitRecord r;
        r.exit_time = 0.0;
        r.exit_point = bps.front().value;
        int face = 0;
        for (const auto& hs : halfspaces_) {
            if (halfspace_slack(hs, bps.front().value) >= -kBoundaryTol) break;
            ++face;
        }
        if (face == static_cast<int>(halfspaces_.size())) {
            for (const auto& bc : balls_) {
                if (ball_slack(bc, bps.front().value) >= -kBoundaryTol) break;
                ++face;
            }
        }
        r.crossed_face = face;
        return r;
    }
    for (std::size_t i = 1; i < bps.size(); ++i) {
        auto hit = check_segment(bps[i - 1].value, bps[i].value, bps[i - 1].time, bps[i].time);
        if (hit) return *hit;
    }
    return ExitRecord{};  // flat tail stays inside
}

std::vector<double> cascade_times(const ConvexDomain& O, const PiecewisePath& p, int n) {
    std::vector<double> times;
    double t_ref = 0.0;
    const double tail = p.breakpoints().back().time;
    for (int i = 0; i < n; ++i) {
        // Increment path s -> p(t_ref + s) - p(t_ref), breakpoints re-based.
        const VecD base = p.at(t_ref);
        std::vector<PiecewisePath::Breakpoint> inc;
        inc.push_back({0.0, VecD::Zero(p.dim())});
        for (const auto& b : p.breakpoints()) {
            if (b.time <= t_ref) continue;
            inc.push_back({b.time - t_ref, b.value - base});
        }
        PiecewisePath q(p.dim(), std::move(inc));
        const ExitRecord r = O.exit_time(q);
        if (!r.exited()) break;
        t_ref += *r.exit_time;
        times.push_back(t_ref);
        if (t_ref >= tail) break;  // inside the flat tail nothing moves again
    }
    return times;
}

ConvexDomain eps_localized(double eps, const ConvexDomain& Q, const PiecewisePath& history) {
    if (!(eps > 0.0)) throw ConfigError("eps_localized: eps must be positive");
    const VecD end = history.final_value();
    if (!Q.contains(end)) throw NumericalError("eps_localized: history already reached the boundary");
    return ConvexDomain::ball(Q.dim(), eps).intersect(Q.shift(end));
}

std::string ConvexDomain::to_json() const {
    nlohmann::json j;
    j["kind"] = kind_;
    j["dim"] = dim_;
    if (dim_ == 1 && balls_.empty()) {
        auto [a, b] = interval_bounds();
        j["a"] = a;
        j["b"] = b;
        return j.dump();
    }
    nlohmann::json faces = nlohmann::json::array();
    for (const auto& hs : halfspaces_) {
        nlohmann::json n = nlohmann::json::array();
        for (int k = 0; k < dim_; ++k) n.push_back(hs.normal[k]);
        faces.push_back({{"normal", n}, {"offset", hs.offset}});
    }
    j["halfspaces"] = faces;
    nlohmann::json balls = nlohmann::json::array();
    for (const auto& bc : balls_) {
        nlohmann::json c = nlohmann::json::array();
        for (int k = 0; k < dim_; ++k) c.push_back(bc.center[k]);
        balls.push_back({{"center", c}, {"radius", bc.radius}});
    }
    j["balls"] = balls;
    return j.dump();
}

ConvexDomain ConvexDomain::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("domain JSON parse error: ") + e.what());
    }
    const std::string kind = j.value("kind", "");
    if (kind == "interval") return interval(j.at("a").get<double>(), j.at("b").get<double>());
    if (kind == "ball") return ball(j.at("dim").get<int>(), j.at("radius").get<double>());
    if (kind == "box") {
        const auto& hw = j.at("half_widths");
        VecD v(static_cast<int>(hw.size()));
        for (int k = 0; k < v.size(); ++k) v[k] = hw[k].get<double>();
        return box(v);
    }
    if (kind == "h-polytope") {
        const int dim = j.at("dim").get<int>();
        std::vector<Halfspace> faces;
        for (const auto& f : j.at("halfspaces")) {
            VecD n(dim);
            for (int k = 0; k < dim; ++k) n[k] = f.at("normal")[k].get<double>();
            faces.push_back({n, f.at("offset").get<double>()});
        }
        return h_polytope(dim, std::move(faces));
    }
    throw ConfigError("unknown domain kind: " + kind);
}

}  // namespace ppde
