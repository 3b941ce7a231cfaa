#include "ppde/uvm.hpp"

#include <algorithm>
#include <cmath>

namespace ppde {

void UvmSpec::validate() const {
    if (!(r > 0.0)) throw ConfigError("uvm: discount rate must be positive");
    if (!(sigma_lo > 0.0) || !(sigma_lo <= sigma_hi)) {
        throw ConfigError("uvm: need 0 < sigma_lo <= sigma_hi");
    }
    if (drift_bound < 0.0) throw ConfigError("uvm: drift bound must be nonnegative");
    if (Q.dim() != 1) throw ConfigError("uvm: one-dimensional domains only");
}

ControlBounds UvmSpec::bounds() const {
    ControlBounds b;
    b.drift_bound = drift_bound;
    b.vol_sq_lo = sigma_lo * sigma_lo;
    b.vol_sq_hi = sigma_hi * sigma_hi;
    b.discount_lo = r;
    b.discount_hi = r;
    return b;
}

UvmPrice price_direct(const UvmSpec& spec, const PiecewisePath& history, double h) {
    spec.validate();
    const ControlBounds b = spec.bounds();
    LatticeModel model(spec.Q, h, b, ControlLattice::from_bounds(b));
    UvmPrice out;
    out.field = sup_expectation(model, spec.payoff, spec.Q, 0.0, history);
    const double x0 = history.final_value()[0];
    out.price = out.field.eval(x0, spec.payoff.reduced_state(history));
    return out;
}

UvmBracket price_perron(const UvmSpec& spec, const PiecewisePath& history, double eps, int m,
                        double h, int jobs) {
    spec.validate();
    const GeneratorSpec G = spec.generator();

    PerronParams params;
    params.m_list = {m};
    params.jobs = jobs;
    params.with_capacity = false;
    params.closure_mode = ClosureMode::Exact;

    // Snap the step so eps stays a grid multiple at both resolutions.
    const double h1 = eps / std::max(1.0, std::round(eps / h));
    params.h = h1;
    PerronResult fine = sweep(history, eps, spec.Q, G, spec.payoff, params);
    params.h = h1 / 2.0;
    PerronResult finer = sweep(history, eps, spec.Q, G, spec.payoff, params);

    UvmBracket out;
    out.detail = fine;
    // Richardson-style inflation: the h -> h/2 movement bounds the
    // remaining discretization bias for a first-or-better-order scheme.
    out.error_estimate = 2.0 * std::abs(fine.u_estimate - finer.u_estimate) + 10.0 * fine.solver_tol;
    out.lo = std::min(fine.bracket_lo, finer.bracket_lo) - out.error_estimate;
    out.hi = std::max(fine.bracket_hi, finer.bracket_hi) + out.error_estimate;
    out.u_estimate = finer.u_estimate;
    return out;
}

McResult mc_superhedge_lb(const UvmSpec& spec, const PiecewisePath& history,
                          const LatticePolicy& policy, int n_paths, double dt,
                          std::uint64_t seed, int jobs) {
    spec.validate();
    return mc_lower_bound(spec.bounds(), policy, spec.payoff, spec.Q, 0.0, history, n_paths, dt,
                          seed, jobs);
}

WorstCase extract_worst_case(const UvmSpec& spec, const UvmPrice& priced,
                             const PiecewisePath& history, int n_paths, double dt,
                             std::uint64_t seed) {
    spec.validate();
    WorstCase out;
    ControlLattice ctl = ControlLattice::from_bounds(spec.bounds());
    out.policy = policy_from_field(priced.field, ctl);

    // Martingale check: along simulated paths under the extracted policy,
    // increments of e^{-rt} u(state) between checkpoints must average to
    // zero. Paths are frozen at exit.
    auto [a, b] = spec.Q.interval_bounds();
    const double x_start = history.final_value()[0];
    const double aux_start = spec.payoff.reduced_state(history);
    const int n_checkpoints = 8;
    const int steps_per_cp = 32;

    std::vector<std::vector<double>> increments(n_checkpoints);
    for (auto& v : increments) v.reserve(n_paths);

    for (int p = 0; p < n_paths; ++p) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(p));
        std::normal_distribution<double> gauss(0.0, 1.0);
        double x = x_start;
        double aux = aux_start;
        double t = 0.0;
        bool exited = false;
        double mark = priced.field.eval(x, aux);  // e^{-r*0} u
        for (int cp = 0; cp < n_checkpoints; ++cp) {
            for (int s = 0; s < steps_per_cp && !exited; ++s) {
                const double v2 = out.policy.vol_sq(x, aux);
                const double al = out.policy.drift(x, aux);
                x += al * dt + std::sqrt(v2 * dt) * gauss(rng);
                t += dt;
                if (x <= a || x >= b) {
                    x = std::clamp(x, a, b);
                    exited = true;
                }
                if (spec.payoff.has_aux) aux = spec.payoff.aux_update(aux, scalar_vec(x));
            }
            const double value = exited ? spec.payoff.terminal(scalar_vec(x), aux)
                                        : priced.field.eval(x, aux);
            const double next_mark = std::exp(-spec.r * t) * value;
            increments[cp].push_back(next_mark - mark);
            mark = next_mark;
        }
    }

    double worst = 0.0;
    for (const auto& v : increments) {
        const MeanStdErr ms = mean_stderr(v);
        if (ms.std_error > 0.0) {
            worst = std::max(worst, std::abs(ms.mean) / ms.std_error);
        } else {
            worst = std::max(worst, std::abs(ms.mean) > 1e-12 ? 1e9 : 0.0);
        }
    }
    out.martingale_residual = worst;
    return out;
}

}  // namespace ppde
