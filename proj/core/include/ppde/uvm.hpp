#pragma once

#include "ppde/domains.hpp"
#include "ppde/generators.hpp"
#include "ppde/lattice.hpp"
#include "ppde/perron.hpp"

#include <cstdint>
#include <utility>

namespace ppde {

/// Superhedging instance: payoff xi paid at the first exit of Q, discounted
/// at rate r, under all volatilities in [sigma_lo, sigma_hi] (and drifts up
/// to `a`, kept as an explicit knob; a = 0 is the martingale family).
struct UvmSpec {
    double r = 1.0;
    double sigma_lo = 1.0;
    double sigma_hi = 1.0;
    double drift_bound = 0.0;  // a
    ConvexDomain Q = ConvexDomain::interval(-1.0, 1.0);
    ReducedPayoff payoff;

    void validate() const;
    GeneratorSpec generator() const { return uvm_generator(r, drift_bound, sigma_lo, sigma_hi); }
    ControlBounds bounds() const;
};

/// Price by the state-augmented lattice dynamic program: sup-expectation
/// with the discount fixed at r, drift band [-a, a], volatility band
/// [sigma_lo^2, sigma_hi^2], no running cost.
struct UvmPrice {
    double price = 0.0;
    LatticeField field;
};

UvmPrice price_direct(const UvmSpec& spec, const PiecewisePath& history, double h);

/// Price bracket through the skeleton recursion. The returned bracket is
/// the squeeze bracket widened by a Richardson error estimate (two grid
/// resolutions), so it contains the continuum price up to the estimate's
/// validity.
struct UvmBracket {
    double lo = 0.0;
    double hi = 0.0;
    double u_estimate = 0.0;
    double error_estimate = 0.0;
    PerronResult detail;
    double width() const { return hi - lo; }
    bool contains(double v) const { return lo <= v && v <= hi; }
};

UvmBracket price_perron(const UvmSpec& spec, const PiecewisePath& history, double eps, int m,
                        double h, int jobs = 1);

/// Simulated lower bound for the superhedging sup under a fixed policy.
McResult mc_superhedge_lb(const UvmSpec& spec, const PiecewisePath& history,
                          const LatticePolicy& policy, int n_paths, double dt,
                          std::uint64_t seed, int jobs = 1);

/// Worst-case volatility extraction: the argmax policy of the pricing
/// field, plus a statistical martingale check of e^{-rt} u(state) under
/// that policy (max |mean increment| over checkpoints, in standard errors).
struct WorstCase {
    LatticePolicy policy;
    double martingale_residual = 0.0;  // max standardized |mean increment|
};

WorstCase extract_worst_case(const UvmSpec& spec, const UvmPrice& priced,
                             const PiecewisePath& history, int n_paths, double dt,
                             std::uint64_t seed);

}  // namespace ppde
