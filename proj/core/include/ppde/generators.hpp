#pragma once

#include "ppde/paths.hpp"
#include "ppde/util.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// Exact control representation of a nonlinearity of HJB type:
///   sup (or inf) over (alpha, vol^2, b) of
///     running_reward - b*y + alpha . z + (vol^2/2) * tr(gamma).
/// Lattice dynamic programming and policy-iteration solves consume this
/// form directly; the one-dimensional control sets list the lattice points
/// (band endpoints, optionally midpoints).
struct HjbForm {
    bool is_sup = true;
    double running_reward = 0.0;
    std::vector<double> drifts{0.0};
    std::vector<double> vol_sqs{1.0};
    std::vector<double> discounts{0.0};

    double evaluate(double y, double z, double gamma) const;
};

/// The nonlinearity G(omega, y, z, gamma) together with its constants:
/// Lipschitz/ellipticity constant L0, bound C0 on |G(.,0,0,0)|, the
/// y-monotonicity modulus lambda with its inverse, and the continuity
/// modulus in the path argument.
struct GeneratorSpec {
    int dim = 1;
    std::function<double(const PiecewisePath&, double, const VecD&, const MatD&)> evaluate;
    double lip_const = 1.0;    // L0
    double bound_const = 0.0;  // C0
    std::function<double(double)> lambda;
    std::function<double(double)> lambda_inv;
    std::function<double(double)> rho;  // modulus in the path argument
    std::optional<HjbForm> hjb;         // present when G has an exact control form

    double operator()(const PiecewisePath& omega, double y, const VecD& z, const MatD& gamma) const {
        return evaluate(omega, y, z, gamma);
    }
    double eval1d(const PiecewisePath& omega, double y, double z, double gamma) const {
        return evaluate(omega, y, scalar_vec(z), scalar_mat(gamma));
    }
};

/// sup over the volatility band [sqrt(2/L)I, sqrt(2L)I] of (1/2) beta^2 : gamma.
/// Eigen-coefficients: 2L on nonnegative eigenvalues, 2/L on negative ones.
double vol_band_sup(const MatD& gamma, double L);
double vol_band_inf(const MatD& gamma, double L);

/// Canonical bounding nonlinearities:
///   g_upper = C0 + L0|z| + L0 y^- + sup band term,
///   g_lower = -C0 - L0|z| - L0 y^+ + inf band term.
double g_upper(double y, const VecD& z, const MatD& gamma, double L0, double C0);
double g_lower(double y, const VecD& z, const MatD& gamma, double L0, double C0);

/// GeneratorSpec wrappers around g_upper / g_lower with their HJB forms.
GeneratorSpec make_g_upper(int dim, double L0, double C0);
GeneratorSpec make_g_lower(int dim, double L0, double C0);

/// Generator of the volatility-uncertainty pricing equation
///   r y - a|z| - sup_{beta in [sigma_lo, sigma_hi]} (1/2) beta^2 : gamma = 0,
/// arranged so that -G(...) = 0 matches that display. lambda(y) = r*y.
GeneratorSpec uvm_generator(double r, double drift_bound, double sigma_lo, double sigma_hi);

/// Linear generator -decay*y + drift.z + (vol_sq/2) tr(gamma); decay >= 0.
GeneratorSpec linear_generator(int dim, double decay, double drift, double vol_sq);

struct AssumptionViolation {
    std::string check;
    std::string detail;
    double margin = 0.0;
};

struct AssumptionReport {
    int samples = 0;
    std::uint64_t seed = 0;
    std::vector<AssumptionViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// Monte Carlo verification of ellipticity, Lipschitz continuity in
/// (y, z, gamma), uniform decrease in y via lambda, boundedness of
/// G(.,0,0,0), and the dominance g_lower <= G <= g_upper, on random tuples.
/// Violations are reported, never thrown.
AssumptionReport check_assumptions(const GeneratorSpec& G, int sample_count, std::uint64_t seed);

}  // namespace ppde
