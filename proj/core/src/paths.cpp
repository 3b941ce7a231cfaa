#include "ppde/paths.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace ppde {

namespace {

constexpr double kGeomTol = 1e-12;

VecD origin(int dim) { return VecD::Zero(dim); }

}  // namespace

PiecewisePath::PiecewisePath(int dim) : dim_(dim) {
    if (dim < 1) throw ConfigError("path dimension must be positive");
    breakpoints_.push_back({0.0, origin(dim)});
}

PiecewisePath::PiecewisePath(int dim, std::vector<Breakpoint> breakpoints)
    : dim_(dim), breakpoints_(std::move(breakpoints)) {
    if (dim < 1) throw ConfigError("path dimension must be positive");
    if (breakpoints_.empty()) {
        breakpoints_.push_back({0.0, origin(dim)});
        return;
    }
    if (breakpoints_.front().time != 0.0 || breakpoints_.front().value.norm() > kGeomTol) {
        throw ConfigError("path must start at (0, origin)");
    }
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
        if (breakpoints_[i].value.size() != dim_) throw ConfigError("breakpoint dimension mismatch");
        if (i > 0 && breakpoints_[i].time <= breakpoints_[i - 1].time) {
            throw ConfigError("breakpoint times must be strictly increasing");
        }
    }
}

VecD PiecewisePath::at(double t) const {
    if (t <= 0.0) return breakpoints_.front().value;
    if (t >= breakpoints_.back().time) return breakpoints_.back().value;
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t,
                               [](double v, const Breakpoint& b) { return v < b.time; });
    const Breakpoint& hi = *it;
    const Breakpoint& lo = *(it - 1);
    const double s = (t - lo.time) / (hi.time - lo.time);
    return lo.value + s * (hi.value - lo.value);
}

double PiecewisePath::bar_t() const {
    // Last time the value changes; trailing repeats belong to the tail.
    std::size_t i = breakpoints_.size() - 1;
    while (i > 0 && (breakpoints_[i].value - breakpoints_[i - 1].value).norm() <= kGeomTol) --i;
    return breakpoints_[i].time * (i > 0 ? 1.0 : 0.0);
}

VecD PiecewisePath::final_value() const { return breakpoints_.back().value; }

double PiecewisePath::max_norm() const {
    double m = 0.0;
    for (const auto& b : breakpoints_) m = std::max(m, b.value.norm());
    return m;
}

bool PiecewisePath::is_constant_zero(double tol) const {
    for (const auto& b : breakpoints_) {
        if (b.value.norm() > tol) return false;
    }
    return true;
}

PiecewisePath lin_interp(int dim, const std::vector<std::pair<double, VecD>>& points) {
    std::vector<PiecewisePath::Breakpoint> bps;
    bps.push_back({0.0, origin(dim)});
    for (const auto& [t, x] : points) {
        if (t < 0.0) throw ConfigError("lin_interp: negative time");
        if (t <= bps.back().time && !(bps.size() == 1 && t == 0.0 && x.norm() <= kGeomTol)) {
            throw ConfigError("lin_interp: times must be strictly increasing");
        }
        if (bps.size() == 1 && t == 0.0) continue;  // explicit (0,0) already present
        bps.push_back({t, x});
    }
    return PiecewisePath(dim, std::move(bps));
}

PiecewisePath lin_interp(const std::vector<std::pair<double, double>>& points) {
    std::vector<std::pair<double, VecD>> pts;
    pts.reserve(points.size());
    for (const auto& [t, x] : points) pts.emplace_back(t, scalar_vec(x));
    return lin_interp(1, pts);
}

PiecewisePath canonicalize(const PiecewisePath& p) {
    std::vector<PiecewisePath::Breakpoint> bps = p.breakpoints();

    // Drop trailing repeats (flat tail needs no breakpoints).
    while (bps.size() > 1 && (bps.back().value - bps[bps.size() - 2].value).norm() <= kGeomTol) {
        bps.pop_back();
    }

    // Remove interior plateaus and collinear interior points. A point is
    // removable when it lies on the segment of its neighbors in forward
    // order, which is exactly when a time reparameterization absorbs it.
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 1; i + 1 < bps.size(); ++i) {
            const VecD& a = bps[i - 1].value;
            const VecD& b = bps[i].value;
            const VecD& c = bps[i + 1].value;
            const VecD ac = c - a;
            const VecD ab = b - a;
            const double len2 = ac.squaredNorm();
            bool removable = false;
            if (ab.norm() <= kGeomTol) {
                removable = true;  // interior plateau start
            } else if (len2 <= kGeomTol * kGeomTol) {
                // a == c: b collinear only if b == a, handled above.
            } else {
                const double s = ab.dot(ac) / len2;
                if (s >= -kGeomTol && s <= 1.0 + kGeomTol && (ab - s * ac).norm() <= kGeomTol * (1.0 + ac.norm())) {
                    removable = true;
                }
            }
            if (removable) {
                bps.erase(bps.begin() + static_cast<std::ptrdiff_t>(i));
                changed = true;
                break;
            }
        }
    }

    // Renumber times to consecutive integers.
    for (std::size_t i = 0; i < bps.size(); ++i) bps[i].time = static_cast<double>(i);
    return PiecewisePath(p.dim(), std::move(bps));
}

namespace {

// Vertex sequence after uniform refinement to edge length <= mesh. The flat
// tail contributes nothing: the final vertex doubles as the matched endpoint.
std::vector<VecD> refine_vertices(const PiecewisePath& p, double mesh) {
    const auto& bps = p.breakpoints();
    std::vector<VecD> out;
    out.push_back(bps.front().value);
    for (std::size_t i = 1; i < bps.size(); ++i) {
        const VecD& a = bps[i - 1].value;
        const VecD& b = bps[i].value;
        const double len = (b - a).norm();
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / mesh)));
        for (int k = 1; k <= pieces; ++k) {
            const double s = static_cast<double>(k) / pieces;
            out.push_back(a + s * (b - a));
        }
    }
    return out;
}

}  // namespace

double de_distance(const PiecewisePath& p, const PiecewisePath& q, double mesh) {
    if (p.dim() != q.dim()) throw ConfigError("de_distance: dimension mismatch");
    if (!(mesh > 0.0)) throw ConfigError("de_distance: mesh must be positive");

    const std::vector<VecD> a = refine_vertices(canonicalize(p), mesh);
    const std::vector<VecD> b = refine_vertices(canonicalize(q), mesh);
    const std::size_t n = a.size();
    const std::size_t m = b.size();

    // Standard coupling dynamic program, rolling row.
    std::vector<double> prev(m), cur(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double dij = (a[0] - b[j]).norm();
        prev[j] = (j == 0) ? dij : std::max(prev[j - 1], dij);
    }
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double dij = (a[i] - b[j]).norm();
            double reach = prev[j];
            if (j > 0) reach = std::min(reach, std::min(prev[j - 1], cur[j - 1]));
            cur[j] = std::max(reach, dij);
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

PiecewisePath concat(const PiecewisePath& history, const PiecewisePath& tail) {
    if (history.dim() != tail.dim()) throw ConfigError("concat: dimension mismatch");
    const double t0 = history.bar_t();
    const VecD x0 = history.final_value();

    std::vector<PiecewisePath::Breakpoint> bps;
    for (const auto& b : history.breakpoints()) {
        if (b.time > t0) break;
        bps.push_back(b);
    }
    for (const auto& b : tail.breakpoints()) {
        if (b.time == 0.0) continue;
        bps.push_back({t0 + b.time, x0 + b.value});
    }
    return canonicalize(PiecewisePath(history.dim(), std::move(bps)));
}

double ModulusFit::operator()(double x) const {
    if (knots_.empty()) return 0.0;
    if (x <= knots_.front().first) return knots_.front().second;
    if (x >= knots_.back().first) return knots_.back().second;
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (x <= knots_[i].first) {
            const auto& [x0, y0] = knots_[i - 1];
            const auto& [x1, y1] = knots_[i];
            const double s = (x - x0) / (x1 - x0);
            return y0 + s * (y1 - y0);
        }
    }
    return knots_.back().second;
}

bool ModulusFit::dominates(const std::vector<std::pair<double, double>>& samples, double tol) const {
    for (const auto& [x, y] : samples) {
        if (y > (*this)(x) + tol) return false;
    }
    return true;
}

ModulusFit fit_modulus(const std::vector<std::pair<double, double>>& samples) {
    if (samples.empty()) throw ConfigError("fit_modulus: empty samples");
    double y_at_zero = 0.0;
    for (const auto& [x, y] : samples) {
        if (x < 0.0 || y < 0.0) throw ConfigError("fit_modulus: negative sample");
        if (x <= kGeomTol) y_at_zero = std::max(y_at_zero, y);
    }

    std::vector<std::pair<double, double>> pts = samples;
    pts.emplace_back(0.0, y_at_zero);
    std::sort(pts.begin(), pts.end());

    // Nondecreasing majorant first (running max), then the upper concave
    // hull of what remains.
    double run = 0.0;
    for (auto& [x, y] : pts) {
        run = std::max(run, y);
        y = run;
    }

    std::vector<std::pair<double, double>> hull;
    for (const auto& pt : pts) {
        if (!hull.empty() && pt.first <= hull.back().first + kGeomTol) {
            hull.back().second = std::max(hull.back().second, pt.second);
            continue;
        }
        while (hull.size() >= 2) {
            const auto& [x1, y1] = hull[hull.size() - 2];
            const auto& [x2, y2] = hull[hull.size() - 1];
            // Keep the hull upper-convex: drop x2 when it lies below the
            // chord from x1 to the new point.
            const double cross = (x2 - x1) * (pt.second - y1) - (pt.first - x1) * (y2 - y1);
            if (cross >= -kGeomTol * (1.0 + std::abs(pt.second))) {
                hull.pop_back();
            } else {
                break;
            }
        }
        hull.push_back(pt);
    }

    ModulusFit fit;
    fit.knots_ = std::move(hull);
    return fit;
}

std::string path_to_json(const PiecewisePath& p) {
    nlohmann::json j;
    j["dim"] = p.dim();
    nlohmann::json bps = nlohmann::json::array();
    for (const auto& b : p.breakpoints()) {
        nlohmann::json coords = nlohmann::json::array();
        for (int k = 0; k < p.dim(); ++k) coords.push_back(b.value[k]);
        bps.push_back(nlohmann::json::array({b.time, coords}));
    }
    j["breakpoints"] = bps;
    return j.dump();
}

PiecewisePath path_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("path JSON parse error: ") + e.what());
    }
    if (!j.contains("dim") || !j.contains("breakpoints")) {
        throw ConfigError("path JSON must contain dim and breakpoints");
    }
    const int dim = j["dim"].get<int>();
    std::vector<PiecewisePath::Breakpoint> bps;
    for (const auto& entry : j["breakpoints"]) {
        if (!entry.is_array() || entry.size() != 2) throw ConfigError("breakpoint must be [t, [x...]]");
        VecD x(dim);
        const auto& coords = entry[1];
        if (static_cast<int>(coords.size()) != dim) throw ConfigError("breakpoint coordinate size mismatch");
        for (int k = 0; k < dim; ++k) x[k] = coords[k].get<double>();
        bps.push_back({entry[0].get<double>(), x});
    }
    return canonicalize(PiecewisePath(dim, std::move(bps)));
}

}  // namespace ppde
