#pragma once

#include "ppde/frozen_pde.hpp"
#include "ppde/generators.hpp"
#include "ppde/lattice.hpp"
#include "ppde/paths.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ppde {

/// Paraboloid test-function coefficients at a point, with the band level L
/// of the stopping families used for the membership test.
struct JetCandidate {
    double alpha = 0.0;
    double beta = 0.0;
    double level = 1.0;  // L
};

/// Field evaluator on paths (time-invariant).
using PathValueFn = std::function<double(const PiecewisePath&)>;

struct JetParams {
    double h = 1e-2;           // lattice step of the membership dynamic program
    double sign_tol = -1.0;    // violation tolerance for -G; default 10*h
    double member_tol = -1.0;  // envelope tolerance; default sign_tol * eps^2 / (2L)
    double resolved_sign_tol(double /*eps*/) const { return sign_tol > 0 ? sign_tol : 10.0 * h; }
    double resolved_member_tol(double eps, double L) const {
        // The envelope responds to a paraboloid deficit delta like
        // delta * eps^2 / 2, so this scaling keeps false members below the
        // sign tolerance.
        return member_tol > 0 ? member_tol : resolved_sign_tol(eps) * eps * eps / (2.0 * L);
    }
};

/// Membership of the candidate paraboloid in the lower (resp. upper) test
/// class at `history`: the obstacle paraboloid(x) - (u(extension) - u(history))
/// is run through the inf- (resp. sup-) Snell envelope on the eps-ball
/// lattice; membership means the envelope at the origin vanishes within
/// tolerance. The field must be determined by the current point on the
/// localized extensions (Markovian there).
bool jet_membership(const PathValueFn& u, const PiecewisePath& history, const JetCandidate& cand,
                    double eps, bool lower_jet, const JetParams& params);

struct AuditViolation {
    JetCandidate cand;
    bool lower_jet = false;
    double g_value = 0.0;  // -G(omega, u(omega), alpha, beta)
    double margin = 0.0;   // amount beyond tolerance
};

struct AuditReport {
    int candidates_tested = 0;
    int lower_members = 0;
    int upper_members = 0;
    std::vector<AuditViolation> violations;
    bool ok() const { return violations.empty(); }
    std::string to_json() const;
};

/// Tests every candidate on an n_alpha x n_beta grid over
/// [-L, L] x [-2L, 2L]: members of the lower jet must satisfy
/// -G(omega, u(omega), alpha, beta) <= tol, members of the upper jet the
/// mirror inequality. Violations are collected, not thrown.
AuditReport audit_point(const PathValueFn& u, const PiecewisePath& history, const GeneratorSpec& G,
                        double level, double eps, int n_alpha, int n_beta,
                        const JetParams& params);

/// Discrete comparison: u1 must be a subsolution and u2 a supersolution of
/// G by signed residuals (within residual_tol), with u1 <= u2 on the
/// boundary; then u1 <= u2 must hold at all nodes.
struct OrderingReport {
    bool precondition_ok = false;
    double max_order_violation = 0.0;
    std::string detail;
    bool ok(double tol) const { return precondition_ok && max_order_violation <= tol; }
};

OrderingReport ordering_check(const ValueField& u1, const ValueField& u2, const GeneratorSpec& G,
                              double residual_tol);

/// Convenience form: compares against u2's own generator (u1 solved under a
/// dominated generator is automatically a subsolution of it).
OrderingReport ordering_check(const ValueField& u1, const ValueField& u2,
                              double residual_tol = 1e-6);

}  // namespace ppde
