#pragma once

#include "ppde/domains.hpp"
#include "ppde/generators.hpp"
#include "ppde/paths.hpp"
#include "ppde/util.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// Control bands of the semimartingale family: |drift| <= drift_bound,
/// squared volatility in [vol_sq_lo, vol_sq_hi] (canonical [2/L, 2L]),
/// discount rate in [discount_lo, discount_hi].
struct ControlBounds {
    double drift_bound = 0.0;
    double vol_sq_lo = 1.0;
    double vol_sq_hi = 1.0;
    double discount_lo = 0.0;
    double discount_hi = 0.0;

    /// Bands of the L-family with discount control on [0, L].
    static ControlBounds canonical(double L);

    void validate() const;
    bool admits(double drift, double vol_sq, double discount, double tol = 1e-12) const;
};

/// Finite control sets fed to the dynamic program. Band endpoints always
/// included; midpoints optional. Volatilities are listed high-to-low so a
/// value tie resolves toward the larger volatility.
struct ControlLattice {
    std::vector<double> drifts{0.0};
    std::vector<double> vol_sqs{1.0};
    std::vector<double> discounts{0.0};

    static ControlLattice from_bounds(const ControlBounds& b, int points_per_band = 2);
    static ControlLattice from_hjb(const HjbForm& form);

    std::size_t size() const { return drifts.size() * vol_sqs.size() * discounts.size(); }
};

/// Payoff xi reduced to a finite auxiliary state so path dependence fits a
/// Markov dynamic program: aux_init folds a history path into the state,
/// aux_update folds one new spatial point, terminal evaluates at the exit.
struct ReducedPayoff {
    bool has_aux = false;
    std::function<double(const PiecewisePath&)> aux_init;
    std::function<double(double, const VecD&)> aux_update;
    std::function<double(const VecD&, double)> terminal;

    static ReducedPayoff constant(double c);
    static ReducedPayoff markovian(std::function<double(const VecD&)> g);
    static ReducedPayoff markovian1d(std::function<double(double)> g);
    /// xi = g(running max of |path|).
    static ReducedPayoff running_max_abs(std::function<double(double)> g);

    double reduced_state(const PiecewisePath& history) const;
    /// Terminal value of the payoff along a whole flat-tail path.
    double eval_on_path(const PiecewisePath& path) const;
};

/// Spatial grid and one-step scheme data shared by every solve on the same
/// lattice. One-dimensional grids are exact: nodes a + i*h with h adjusted
/// to fit the interval; dt is the largest value keeping all upwind weights
/// nonnegative at the extreme controls.
class LatticeModel {
public:
    LatticeModel(const ConvexDomain& domain, double h, ControlBounds bounds,
                 ControlLattice controls, std::optional<double> dt = std::nullopt);

    int dim() const { return domain_.dim(); }
    const ConvexDomain& domain() const { return domain_; }
    double h() const { return h_; }
    double dt() const { return dt_; }
    const ControlBounds& bounds() const { return bounds_; }
    const ControlLattice& controls() const { return controls_; }

    /// 1-d node coordinates.
    const std::vector<double>& grid() const { return xs_; }
    int node_index(double x, double tol = 1e-9) const;

private:
    ConvexDomain domain_;
    double h_;
    double dt_;
    ControlBounds bounds_;
    ControlLattice controls_;
    std::vector<double> xs_;
};

/// Value field over (node, aux-state) with extracted argmax controls.
struct LatticeField {
    std::vector<double> xs;
    std::vector<double> aux_values{0.0};
    std::vector<double> values;        // [node * naux + aux]
    std::vector<int> control_index;    // flattened control per state, -1 at exit states
    std::vector<char> interior;        // per node, w.r.t. the stop domain
    double h = 0.0;
    double dt = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;

    double value_at(int node, int aux = 0) const { return values[static_cast<std::size_t>(node) * aux_values.size() + aux]; }
    /// Linear interpolation in x at a fixed aux level (nearest aux value).
    double eval(double x, double aux = 0.0) const;
    int aux_index(double aux) const;
    std::string to_csv() const;
};

/// Fixed point of the controlled one-step operator
///   V = opt over controls of [running_cost*dt + e^{-b dt} * (step average of V)]
/// with V = payoff terminal on exit nodes of stop_domain; opt = max.
/// Realizes the upper stochastic representation of the bounding equations.
LatticeField sup_expectation(const LatticeModel& model, const ReducedPayoff& payoff,
                             const ConvexDomain& stop_domain, double running_cost,
                             const PiecewisePath& history);

/// Mirror with min over controls.
LatticeField inf_expectation(const LatticeModel& model, const ReducedPayoff& payoff,
                             const ConvexDomain& stop_domain, double running_cost,
                             const PiecewisePath& history);

struct SnellResult {
    LatticeField envelope;
    std::vector<char> stopping;  // per (node, aux) state: envelope equals the obstacle
};

/// Optimal-stopping envelope Y = max(obstacle, sup-one-step continuation),
/// stationary when horizon is absent, finite-horizon backward induction
/// otherwise (the returned field is the time-0 slice).
SnellResult snell_sup(const LatticeModel& model, const ReducedPayoff& obstacle,
                      const ConvexDomain& stop_domain,
                      std::optional<int> horizon_steps = std::nullopt,
                      const PiecewisePath* history = nullptr);

/// Mirror: Y = min(obstacle, inf-one-step continuation).
SnellResult snell_inf(const LatticeModel& model, const ReducedPayoff& obstacle,
                      const ConvexDomain& stop_domain,
                      std::optional<int> horizon_steps = std::nullopt,
                      const PiecewisePath* history = nullptr);

/// Capacity of exiting O strictly before time T, sup over the control bands.
double capacity_exit_before(const LatticeModel& model, const ConvexDomain& O, double T);

/// Capacity of completing n eps-increment exits strictly before leaving Q,
/// started at x0. Each leg is an exact tridiagonal solve per reference node.
double capacity_cascade(const LatticeModel& model, const ConvexDomain& Q, double eps,
                        double x0, int n);

/// Exact capacity of a path event on the one-step tree up to `horizon`
/// steps (exponential in horizon; intended for small verification
/// instances). The event sees the visited node coordinates.
double capacity_tree(const LatticeModel& model,
                     const std::function<bool(const std::vector<double>&)>& event,
                     int horizon);

/// Feedback control as functions of (position, aux).
struct LatticePolicy {
    std::function<double(double, double)> drift;
    std::function<double(double, double)> vol_sq;
    std::function<double(double, double)> discount;
};

/// argmax controls of a solved field as a feedback policy (nearest state).
LatticePolicy policy_from_field(const LatticeField& field, const ControlLattice& controls);

struct McResult {
    double estimate = 0.0;
    double std_error = 0.0;
    int n_paths = 0;
    std::uint64_t seed = 0;
};

/// Discounted payoff average under a fixed admissible control, simulated by
/// the Euler scheme with a Brownian-bridge boundary test (removes the
/// sqrt(dt) exit-time bias). Lower bound for the sup problem. Policies
/// outside the bounds are rejected.
McResult mc_lower_bound(const ControlBounds& bounds, const LatticePolicy& policy,
                        const ReducedPayoff& payoff, const ConvexDomain& stop_domain,
                        double running_cost, const PiecewisePath& history, int n_paths,
                        double dt, std::uint64_t seed, int jobs = 1);

/// Expected exit time of the L-band family from (-r, r) started at x:
///   (1/L^3)(e^{L^2 r} - e^{L^2 |x|}) - (1/L)(r - |x|).
double exit_time_closed_form(double L, double r, double x);

/// One-step mean and variance of the scheme at a given control; the mean is
/// drift*dt exactly and the variance is vol_sq*dt up to an |drift|*h*dt
/// upwinding correction (local consistency of the chain approximation).
struct StepMoments {
    double mean = 0.0;
    double variance = 0.0;
    double weight_sum = 0.0;  // includes the stay-put weight
};
StepMoments one_step_moments(const LatticeModel& model, double drift, double vol_sq);

/// Zero-drift box-grid solve in dimension >= 2 (diagonal volatility
/// controls). Returns the value at x0.
double expectation_nd(const ConvexDomain& domain, double h, const ControlBounds& bounds,
                      const ControlLattice& controls, const ReducedPayoff& payoff,
                      double running_cost, const VecD& x0, bool maximize);

}  // namespace ppde
