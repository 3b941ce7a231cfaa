#include "ppde/viscosity_audit.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace ppde {

namespace {

// Obstacle at relative offset x: paraboloid minus the field increment.
ReducedPayoff jet_obstacle(const PathValueFn& u, const PiecewisePath& history,
                           const JetCandidate& cand) {
    const double u0 = u(history);
    return ReducedPayoff::markovian1d([&u, history, cand, u0](double xr) {
        const double paraboloid = cand.alpha * xr + 0.5 * cand.beta * xr * xr;
        if (xr == 0.0) return paraboloid;
        const PiecewisePath ext = concat(history, lin_interp({{1.0, xr}}));
        return paraboloid - (u(ext) - u0);
    });
}

}  // namespace

bool jet_membership(const PathValueFn& u, const PiecewisePath& history, const JetCandidate& cand,
                    double eps, bool lower_jet, const JetParams& params) {
    if (!(eps > 0.0)) throw ConfigError("jet_membership: eps must be positive");
    const double L = cand.level;
    ControlBounds b;
    b.drift_bound = L;
    b.vol_sq_lo = 2.0 / L;
    b.vol_sq_hi = 2.0 * L;
    const ConvexDomain ball = ConvexDomain::interval(-eps, eps);
    LatticeModel model(ball, params.h, b, ControlLattice::from_bounds(b));

    const ReducedPayoff obstacle = jet_obstacle(u, history, cand);
    const SnellResult snell = lower_jet ? snell_inf(model, obstacle, ball)
                                        : snell_sup(model, obstacle, ball);
    const double y0 = snell.envelope.eval(0.0);
    return std::abs(y0) <= params.resolved_member_tol(eps, L);
}

AuditReport audit_point(const PathValueFn& u, const PiecewisePath& history, const GeneratorSpec& G,
                        double level, double eps, int n_alpha, int n_beta,
                        const JetParams& params) {
    AuditReport rep;
    const double u0 = u(history);
    const double tol_sign = params.resolved_sign_tol(eps);
    for (int ia = 0; ia < n_alpha; ++ia) {
        for (int ib = 0; ib < n_beta; ++ib) {
            JetCandidate cand;
            cand.level = level;
            cand.alpha = n_alpha == 1 ? 0.0 : -level + 2.0 * level * ia / (n_alpha - 1);
            cand.beta = n_beta == 1 ? 0.0 : -2.0 * level + 4.0 * level * ib / (n_beta - 1);
            ++rep.candidates_tested;

            const double g = -G.eval1d(history, u0, cand.alpha, cand.beta);
            if (jet_membership(u, history, cand, eps, /*lower_jet=*/true, params)) {
                ++rep.lower_members;
                if (g > tol_sign) {
                    rep.violations.push_back({cand, true, g, g - tol_sign});
                }
            }
            if (jet_membership(u, history, cand, eps, /*lower_jet=*/false, params)) {
                ++rep.upper_members;
                if (g < -tol_sign) {
                    rep.violations.push_back({cand, false, g, -g - tol_sign});
                }
            }
        }
    }
    std::sort(rep.violations.begin(), rep.violations.end(),
              [](const AuditViolation& a, const AuditViolation& b) {
                  return std::tie(a.cand.alpha, a.cand.beta) < std::tie(b.cand.alpha, b.cand.beta);
              });
    return rep;
}

std::string AuditReport::to_json() const {
    nlohmann::json j;
    j["candidates_tested"] = candidates_tested;
    j["lower_members"] = lower_members;
    j["upper_members"] = upper_members;
    nlohmann::json v = nlohmann::json::array();
    for (const auto& viol : violations) {
        v.push_back({{"alpha", viol.cand.alpha},
                     {"beta", viol.cand.beta},
                     {"lower_jet", viol.lower_jet},
                     {"g_value", viol.g_value},
                     {"margin", viol.margin}});
    }
    j["violations"] = v;
    return j.dump(2);
}

OrderingReport ordering_check(const ValueField& u1, const ValueField& u2, const GeneratorSpec& G,
                              double residual_tol) {
    OrderingReport rep;
    if (u1.xs.size() != u2.xs.size() || std::abs(u1.h - u2.h) > 1e-12) {
        throw ConfigError("ordering_check: fields live on different grids");
    }
    const std::vector<double> r1 = fd_residuals(G, u1);
    const std::vector<double> r2 = fd_residuals(G, u2);
    double sub_viol = 0.0, super_viol = 0.0;
    for (std::size_t i = 1; i + 1 < u1.xs.size(); ++i) {
        sub_viol = std::max(sub_viol, r1[i]);       // subsolution: -G <= 0
        super_viol = std::max(super_viol, -r2[i]);  // supersolution: -G >= 0
    }
    const double bnd = std::max(u1.values.front() - u2.values.front(),
                                u1.values.back() - u2.values.back());
    if (sub_viol > residual_tol || super_viol > residual_tol || bnd > residual_tol) {
        rep.precondition_ok = false;
        rep.detail = "subsolution residual " + std::to_string(sub_viol) +
                     ", supersolution residual " + std::to_string(super_viol) +
                     ", boundary excess " + std::to_string(bnd);
        return rep;
    }
    rep.precondition_ok = true;
    for (std::size_t i = 0; i < u1.xs.size(); ++i) {
        rep.max_order_violation = std::max(rep.max_order_violation, u1.values[i] - u2.values[i]);
    }
    return rep;
}

OrderingReport ordering_check(const ValueField& u1, const ValueField& u2, double residual_tol) {
    return ordering_check(u1, u2, u2.problem.generator, residual_tol);
}

}  // namespace ppde
