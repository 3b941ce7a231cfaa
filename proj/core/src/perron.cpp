#include "ppde/perron.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ppde {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

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

// Fold the payoff's auxiliary state through the skeleton vertices (absolute
// coordinates); `extra` appends one more point.
double fold_aux(const ReducedPayoff& xi, const PiecewisePath& history, const SkeletonNode& node,
                double eps, double x0, std::optional<double> extra) {
    if (!xi.has_aux) return 0.0;
    double aux = xi.aux_init(history);
    double off = 0.0;
    for (int s : node.steps) {
        off += s * eps;
        aux = xi.aux_update(aux, scalar_vec(x0 + off));
    }
    if (extra) aux = xi.aux_update(aux, scalar_vec(*extra));
    return aux;
}

struct SweepGrid {
    double x0 = 0.0;
    double a_hat = 0.0, b_hat = 0.0;  // Q endpoints snapped to the x0-anchored grid
    double h = 0.0;
    ConvexDomain Q_hat = ConvexDomain::interval(-1.0, 1.0);
};

SweepGrid make_grid(const PiecewisePath& history, const ConvexDomain& Q, double eps, double h) {
    SweepGrid g;
    g.x0 = history.final_value()[0];
    auto [a, b] = Q.interval_bounds();
    if (!(a < g.x0 && g.x0 < b)) throw ConfigError("sweep: history must end strictly inside Q");
    const long ke = std::llround(eps / h);
    if (ke < 1 || std::abs(ke * h - eps) > 1e-9) {
        throw ConfigError("sweep: eps must be a positive multiple of h");
    }
    const long na = std::max<long>(1, std::llround((g.x0 - a) / h));
    const long nb = std::max<long>(1, std::llround((b - g.x0) / h));
    g.a_hat = g.x0 - na * h;
    g.b_hat = g.x0 + nb * h;
    g.h = h;
    g.Q_hat = ConvexDomain::interval(g.a_hat, g.b_hat);
    return g;
}

}  // namespace

PiecewisePath SkeletonNode::skeleton_path(double eps) const {
    std::vector<std::pair<double, double>> pts;
    double off = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        off += steps[i] * eps;
        pts.emplace_back(static_cast<double>(i + 1), off);
    }
    return lin_interp(pts);
}

PerronTree build_tree(const PiecewisePath& history, double eps, const ConvexDomain& Q, int depth) {
    if (Q.dim() != 1) throw ConfigError("build_tree: one-dimensional domains only");
    auto [a, b] = Q.interval_bounds();
    const double x0 = history.final_value()[0];
    if (!(a < x0 && x0 < b)) throw NumericalError("build_tree: history on or outside the boundary");

    PerronTree tree;
    tree.levels.assign(depth + 1, {});

    auto make_node = [&](std::vector<int> steps, int level) {
        SkeletonNode n;
        n.steps = std::move(steps);
        n.level = level;
        n.end_offset = 0.0;
        for (int s : n.steps) n.end_offset += s * eps;
        const double end_abs = x0 + n.end_offset;
        n.lo_rel = std::max(-eps, a - end_abs);
        n.hi_rel = std::min(eps, b - end_abs);
        // OuterSphere iff the endpoint sits on the eps-sphere strictly
        // inside Q; corner ties are domain boundary.
        const double tol = 1e-9;
        n.lo_class = (std::abs(n.lo_rel + eps) <= tol && end_abs - eps > a + tol)
                         ? BoundaryClass::OuterSphere
                         : BoundaryClass::DomainBoundary;
        n.hi_class = (std::abs(n.hi_rel - eps) <= tol && end_abs + eps < b - tol)
                         ? BoundaryClass::OuterSphere
                         : BoundaryClass::DomainBoundary;
        return n;
    };

    tree.nodes.push_back(make_node({}, 0));
    tree.levels[0].push_back(0);
    for (int lvl = 0; lvl < depth; ++lvl) {
        for (int id : tree.levels[lvl]) {
            SkeletonNode node = tree.nodes[id];  // copy: push_back may reallocate
            if (node.lo_class == BoundaryClass::OuterSphere) {
                auto steps = node.steps;
                steps.push_back(-1);
                tree.nodes.push_back(make_node(std::move(steps), lvl + 1));
                tree.nodes[id].child_lo = static_cast<int>(tree.nodes.size()) - 1;
                tree.levels[lvl + 1].push_back(tree.nodes[id].child_lo);
            }
            if (node.hi_class == BoundaryClass::OuterSphere) {
                auto steps = node.steps;
                steps.push_back(+1);
                tree.nodes.push_back(make_node(std::move(steps), lvl + 1));
                tree.nodes[id].child_hi = static_cast<int>(tree.nodes.size()) - 1;
                tree.levels[lvl + 1].push_back(tree.nodes[id].child_hi);
            }
        }
    }
    return tree;
}

namespace {

struct ClosureFields {
    LatticeField upper;
    LatticeField lower;
    ControlBounds shared_bounds;
    double shared_dt = 0.0;
};

ClosureFields make_closures(const SweepGrid& grid, const PiecewisePath& history,
                            const GeneratorSpec& G, const ReducedPayoff& xi,
                            const PerronParams& params) {
    ClosureFields out;
    const double L0 = G.lip_const;
    if (params.closure_mode == ClosureMode::Exact) {
        if (!G.hjb) throw ConfigError("sweep: exact closures need a generator with a control form");
        out.shared_bounds = bounds_of_form(*G.hjb);
        LatticeModel model(grid.Q_hat, grid.h, out.shared_bounds, ControlLattice::from_hjb(*G.hjb));
        out.shared_dt = model.dt();
        out.upper = G.hjb->is_sup
                        ? sup_expectation(model, xi, grid.Q_hat, G.hjb->running_reward, history)
                        : inf_expectation(model, xi, grid.Q_hat, G.hjb->running_reward, history);
        out.lower = out.upper;
        return out;
    }
    ControlBounds cb = ControlBounds::canonical(L0);
    if (G.hjb) {
        // The node solves use the generator's own controls; the shared
        // operator must admit both them and the canonical bands.
        const ControlBounds fb = bounds_of_form(*G.hjb);
        cb.drift_bound = std::max(cb.drift_bound, fb.drift_bound);
        cb.vol_sq_lo = std::min(cb.vol_sq_lo, fb.vol_sq_lo);
        cb.vol_sq_hi = std::max(cb.vol_sq_hi, fb.vol_sq_hi);
        cb.discount_hi = std::max(cb.discount_hi, fb.discount_hi);
    }
    out.shared_bounds = cb;
    LatticeModel model(grid.Q_hat, grid.h, cb, ControlLattice::from_bounds(cb));
    out.shared_dt = model.dt();
    out.upper = sup_expectation(model, xi, grid.Q_hat, G.bound_const, history);
    out.lower = inf_expectation(model, xi, grid.Q_hat, -G.bound_const, history);
    return out;
}

}  // namespace

double terminal_closure(const PiecewisePath& history, const SkeletonNode& node, double eps,
                        const ConvexDomain& Q, const GeneratorSpec& G, const ReducedPayoff& xi,
                        bool upper, const PerronParams& params) {
    const SweepGrid grid = make_grid(history, Q, eps, params.h);
    const ClosureFields cf = make_closures(grid, history, G, xi, params);
    const double end_abs = grid.x0 + node.end_offset;
    const double aux = fold_aux(xi, history, node, eps, grid.x0, std::nullopt);
    return upper ? cf.upper.eval(end_abs, aux) : cf.lower.eval(end_abs, aux);
}

PerronResult sweep(const PiecewisePath& history, double eps, const ConvexDomain& Q,
                   const GeneratorSpec& G, const ReducedPayoff& xi, const PerronParams& params) {
    if (G.dim != 1) throw ConfigError("sweep: one-dimensional generators only");
    const SweepGrid grid = make_grid(history, Q, eps, params.h);
    const ClosureFields cf = make_closures(grid, history, G, xi, params);
    const PiecewisePath frozen_root = canonicalize(history);

    std::vector<int> ms = params.m_list;
    std::sort(ms.begin(), ms.end());
    if (ms.empty()) throw ConfigError("sweep: m_list must not be empty");
    const int m_max = ms.back();

    PerronResult res;
    res.m_list = ms;
    res.tree = build_tree(history, eps, grid.Q_hat, m_max);
    const auto& tree = res.tree;
    res.upper_node.assign(ms.size(), std::vector<double>(tree.nodes.size(), kNaN));
    res.lower_node.assign(ms.size(), std::vector<double>(tree.nodes.size(), kNaN));

    // Capacity model (coarse grid, canonical bands, eps-aligned).
    std::optional<LatticeModel> cap_model;
    if (params.with_capacity) {
        const double ch = eps / std::max(1.0, std::round(eps / params.capacity_h));
        cap_model.emplace(grid.Q_hat, ch, ControlBounds::canonical(G.lip_const),
                          ControlLattice::from_bounds(ControlBounds::canonical(G.lip_const)));
    }

    for (std::size_t mi = 0; mi < ms.size(); ++mi) {
        const int m = ms[mi];
        auto& up = res.upper_node[mi];
        auto& lo = res.lower_node[mi];

        for (int id : tree.levels[m]) {
            const SkeletonNode& node = tree.nodes[id];
            const double end_abs = grid.x0 + node.end_offset;
            const double aux = fold_aux(xi, history, node, eps, grid.x0, std::nullopt);
            up[id] = cf.upper.eval(end_abs, aux);
            lo[id] = cf.lower.eval(end_abs, aux);
        }

        ValueField root_up, root_lo;
        for (int lvl = m - 1; lvl >= 0; --lvl) {
            const auto& ids = tree.levels[lvl];
            std::vector<std::string> errors(ids.size());
            std::vector<std::pair<double, double>> vals(ids.size());
            std::vector<std::pair<ValueField, ValueField>> fields(ids.size());

            parallel_for(params.jobs, ids.size(), [&](std::size_t q) {
                const int id = ids[q];
                const SkeletonNode& node = tree.nodes[id];
                try {
                    const double end_abs = grid.x0 + node.end_offset;
                    FrozenProblem fp;
                    fp.frozen_path = concat(frozen_root, node.skeleton_path(eps));
                    fp.domain = ConvexDomain::interval(node.lo_rel, node.hi_rel);
                    fp.generator = G;
                    fp.h = grid.h;
                    if (G.hjb) {
                        fp.dt = cf.shared_dt;
                        fp.dt_bounds = cf.shared_bounds;
                    }
                    auto endpoint_value = [&](double e_rel, BoundaryClass cls, int child,
                                              const std::vector<double>& theta) -> double {
                        if (cls == BoundaryClass::OuterSphere) {
                            return theta[child];
                        }
                        const double x_abs = end_abs + e_rel;
                        const double aux = fold_aux(xi, history, node, eps, grid.x0, x_abs);
                        return xi.terminal(scalar_vec(x_abs), aux);
                    };
                    fp.boundary_data = {
                        {node.lo_rel, endpoint_value(node.lo_rel, node.lo_class, node.child_lo, up)},
                        {node.hi_rel, endpoint_value(node.hi_rel, node.hi_class, node.child_hi, up)}};
                    ValueField fu = solve_dirichlet(fp);
                    fp.boundary_data = {
                        {node.lo_rel, endpoint_value(node.lo_rel, node.lo_class, node.child_lo, lo)},
                        {node.hi_rel, endpoint_value(node.hi_rel, node.hi_class, node.child_hi, lo)}};
                    ValueField fl = solve_dirichlet(fp);
                    vals[q] = {fu.eval(0.0), fl.eval(0.0)};
                    if (lvl == 0) fields[q] = {fu, fl};
                } catch (const std::exception& e) {
                    std::ostringstream os;
                    os << "node [";
                    for (int s : node.steps) os << (s > 0 ? '+' : '-');
                    os << "] at level " << node.level << ": " << e.what();
                    errors[q] = os.str();
                }
            });
            for (const auto& err : errors) {
                if (!err.empty()) throw NumericalError("sweep failed at " + err);
            }
            for (std::size_t q = 0; q < ids.size(); ++q) {
                up[ids[q]] = vals[q].first;
                lo[ids[q]] = vals[q].second;
                if (lvl == 0) {
                    root_up = std::move(fields[q].first);
                    root_lo = std::move(fields[q].second);
                }
            }
        }

        res.upper_root.push_back(up[0]);
        res.lower_root.push_back(lo[0]);
        double g = up[0] - lo[0];
        if (m > 0) {
            for (std::size_t i = 0; i < root_up.values.size(); ++i) {
                g = std::max(g, root_up.values[i] - root_lo.values[i]);
            }
        }
        res.gap.push_back(g);
        res.capacity.push_back(cap_model ? capacity_cascade(*cap_model, grid.Q_hat, eps, grid.x0, m)
                                         : kNaN);
        for (double v : up) {
            if (!std::isnan(v)) res.max_abs_theta = std::max(res.max_abs_theta, std::abs(v));
        }
        for (double v : lo) {
            if (!std::isnan(v)) res.max_abs_theta = std::max(res.max_abs_theta, std::abs(v));
        }
    }

    res.bracket_lo = res.lower_root.back();
    res.bracket_hi = res.upper_root.back();
    res.u_estimate = 0.5 * (res.bracket_lo + res.bracket_hi);
    return res;
}

ModulusProbe modulus_probe(const PiecewisePath& history1, const PiecewisePath& history2,
                           double eps, const ConvexDomain& Q, const GeneratorSpec& G,
                           const ReducedPayoff& xi, int m, const PerronParams& params) {
    PerronParams p = params;
    p.m_list = {m};
    p.with_capacity = false;
    const PerronResult r1 = sweep(history1, eps, Q, G, xi, p);
    const PerronResult r2 = sweep(history2, eps, Q, G, xi, p);
    ModulusProbe out;
    out.value_gap = std::abs(r1.u_estimate - r2.u_estimate);
    out.de = de_distance(history1, history2, std::min(0.25, eps));
    return out;
}

std::string PerronResult::report_json() const {
    nlohmann::json j;
    j["m_list"] = m_list;
    j["upper_root"] = upper_root;
    j["lower_root"] = lower_root;
    j["gap"] = gap;
    j["capacity"] = capacity;
    j["u_estimate"] = u_estimate;
    j["bracket"] = {bracket_lo, bracket_hi};
    j["max_abs_theta"] = max_abs_theta;
    j["nodes"] = tree.nodes.size();
    return j.dump(2);
}

std::string PerronResult::nodes_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "m,node,level,end_offset";
    os << ",theta_upper,theta_lower\n";
    for (std::size_t mi = 0; mi < m_list.size(); ++mi) {
        for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
            if (std::isnan(upper_node[mi][id])) continue;
            os << m_list[mi] << "," << id << "," << tree.nodes[id].level << ","
               << tree.nodes[id].end_offset << "," << upper_node[mi][id] << ","
               << lower_node[mi][id] << "\n";
        }
    }
    return os.str();
}

}  // namespace ppde
