#include "ppde/lattice.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

namespace ppde {

ControlBounds ControlBounds::canonical(double L) {
    if (!(L > 0.0)) throw ConfigError("canonical bounds need L > 0");
    ControlBounds b;
    b.drift_bound = L;
    b.vol_sq_lo = 2.0 / L;
    b.vol_sq_hi = 2.0 * L;
    b.discount_lo = 0.0;
    b.discount_hi = L;
    return b;
}

void ControlBounds::validate() const {
    if (!(vol_sq_lo > 0.0) || !(vol_sq_lo <= vol_sq_hi)) {
        throw ConfigError("bounds need 0 < vol_sq_lo <= vol_sq_hi");
    }
    if (drift_bound < 0.0 || discount_lo < 0.0 || discount_lo > discount_hi) {
        throw ConfigError("bounds need drift_bound >= 0 and 0 <= discount_lo <= discount_hi");
    }
}

bool ControlBounds::admits(double drift, double vol_sq, double discount, double tol) const {
    return std::abs(drift) <= drift_bound + tol && vol_sq >= vol_sq_lo - tol &&
           vol_sq <= vol_sq_hi + tol && discount >= discount_lo - tol && discount <= discount_hi + tol;
}

namespace {

std::vector<double> band_points(double lo, double hi, int points) {
    if (lo == hi) return {lo};
    if (points <= 2) return {hi, lo};
    std::vector<double> out;
    for (int k = points - 1; k >= 0; --k) {
        out.push_back(lo + (hi - lo) * static_cast<double>(k) / (points - 1));
    }
    return out;  // descending: ties resolve toward the larger value
}

}  // namespace

ControlLattice ControlLattice::from_bounds(const ControlBounds& b, int points_per_band) {
    b.validate();
    ControlLattice c;
    if (b.drift_bound == 0.0) {
        c.drifts = {0.0};
    } else if (points_per_band <= 2) {
        c.drifts = {-b.drift_bound, 0.0, b.drift_bound};
    } else {
        c.drifts.clear();
        for (int k = 0; k < points_per_band; ++k) {
            c.drifts.push_back(-b.drift_bound + 2.0 * b.drift_bound * k / (points_per_band - 1));
        }
        if (std::find(c.drifts.begin(), c.drifts.end(), 0.0) == c.drifts.end()) c.drifts.push_back(0.0);
    }
    c.vol_sqs = band_points(b.vol_sq_lo, b.vol_sq_hi, points_per_band);
    c.discounts = band_points(b.discount_lo, b.discount_hi, points_per_band);
    return c;
}

ControlLattice ControlLattice::from_hjb(const HjbForm& form) {
    ControlLattice c;
    c.drifts = form.drifts;
    c.vol_sqs = form.vol_sqs;
    std::sort(c.vol_sqs.begin(), c.vol_sqs.end(), std::greater<double>());
    c.discounts = form.discounts;
    return c;
}

ReducedPayoff ReducedPayoff::constant(double c) {
    ReducedPayoff p;
    p.terminal = [c](const VecD&, double) { return c; };
    return p;
}

ReducedPayoff ReducedPayoff::markovian(std::function<double(const VecD&)> g) {
    ReducedPayoff p;
    p.terminal = [g = std::move(g)](const VecD& x, double) { return g(x); };
    return p;
}

ReducedPayoff ReducedPayoff::markovian1d(std::function<double(double)> g) {
    ReducedPayoff p;
    p.terminal = [g = std::move(g)](const VecD& x, double) { return g(x[0]); };
    return p;
}

ReducedPayoff ReducedPayoff::running_max_abs(std::function<double(double)> g) {
    ReducedPayoff p;
    p.has_aux = true;
    p.aux_init = [](const PiecewisePath& history) { return history.max_norm(); };
    p.aux_update = [](double aux, const VecD& x) { return std::max(aux, x.norm()); };
    p.terminal = [g = std::move(g)](const VecD& x, double aux) { return g(std::max(aux, x.norm())); };
    return p;
}

double ReducedPayoff::reduced_state(const PiecewisePath& history) const {
    if (!has_aux) return 0.0;
    return aux_init(history);
}

double ReducedPayoff::eval_on_path(const PiecewisePath& path) const {
    if (!has_aux) return terminal(path.final_value(), 0.0);
    return terminal(path.final_value(), aux_init(path));
}

LatticeModel::LatticeModel(const ConvexDomain& domain, double h, ControlBounds bounds,
                           ControlLattice controls, std::optional<double> dt)
    : domain_(domain), h_(h), bounds_(bounds), controls_(std::move(controls)) {
    bounds_.validate();
    if (!(h > 0.0)) throw ConfigError("lattice step must be positive");
    for (double a : controls_.drifts) {
        for (double v : controls_.vol_sqs) {
            for (double b : controls_.discounts) {
                if (!bounds_.admits(a, v, b)) throw ConfigError("control lattice exceeds bounds");
            }
        }
    }
    if (domain_.dim() == 1) {
        auto [a, b] = domain_.interval_bounds();
        const int n = std::max(2, static_cast<int>(std::llround((b - a) / h)));
        h_ = (b - a) / n;
        xs_.resize(n + 1);
        for (int i = 0; i <= n; ++i) xs_[i] = a + i * h_;
        xs_.front() = a;
        xs_.back() = b;
    }
    // Largest dt keeping the upwind weights nonnegative at the extreme
    // controls of the *bounds* (not just the lattice), so every solve that
    // shares this model's bounds shares the same one-step operator.
    const double cfl = bounds_.vol_sq_hi / (h_ * h_) + bounds_.drift_bound / h_;
    dt_ = dt.value_or(1.0 / cfl);
    if (dt_ * cfl > 1.0 + 1e-12) throw ConfigError("dt violates the CFL condition for these bounds");
}

int LatticeModel::node_index(double x, double tol) const {
    if (xs_.empty()) throw ConfigError("node_index: not a one-dimensional model");
    const int i = static_cast<int>(std::llround((x - xs_.front()) / h_));
    if (i < 0 || i >= static_cast<int>(xs_.size()) || std::abs(xs_[i] - x) > tol) {
        throw ConfigError("node_index: point is not a grid node");
    }
    return i;
}

int LatticeField::aux_index(double aux) const {
    int best = 0;
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < aux_values.size(); ++j) {
        const double e = std::abs(aux_values[j] - aux);
        if (e < err) {
            err = e;
            best = static_cast<int>(j);
        }
    }
    return best;
}

double LatticeField::eval(double x, double aux) const {
    const int j = aux_index(aux);
    if (x <= xs.front()) return value_at(0, j);
    if (x >= xs.back()) return value_at(static_cast<int>(xs.size()) - 1, j);
    const double s = (x - xs.front()) / h;
    const int i = std::min(static_cast<int>(s), static_cast<int>(xs.size()) - 2);
    const double w = s - i;
    return (1.0 - w) * value_at(i, j) + w * value_at(i + 1, j);
}

std::string LatticeField::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "x,aux,value,control_index\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < aux_values.size(); ++j) {
            os << xs[i] << "," << aux_values[j] << "," << values[i * aux_values.size() + j] << ","
               << control_index[i * aux_values.size() + j] << "\n";
        }
    }
    return os.str();
}

namespace {

constexpr double kFixTol = 1e-13;
constexpr double kResidualTol = 1e-9;
constexpr long kMaxSweeps = 1000000;

struct FlatControls {
    std::vector<double> alpha, vol, disc;
    std::size_t size() const { return alpha.size(); }
};

FlatControls flatten(const ControlLattice& c, bool zero_discount = false) {
    FlatControls f;
    for (double b : (zero_discount ? std::vector<double>{0.0} : c.discounts)) {
        for (double v : c.vol_sqs) {
            for (double a : c.drifts) {
                f.disc.push_back(b);
                f.vol.push_back(v);
                f.alpha.push_back(a);
            }
        }
    }
    return f;
}

// One-step transition data of control k on step (h, dt): upwind trinomial.
struct StepWeights {
    double pu, pd, p0, f;
};

StepWeights weights(const FlatControls& c, std::size_t k, double h, double dt) {
    StepWeights w;
    const double base = c.vol[k] * dt / (2.0 * h * h);
    w.pu = base + std::max(c.alpha[k], 0.0) * dt / h;
    w.pd = base + std::max(-c.alpha[k], 0.0) * dt / h;
    w.p0 = 1.0 - w.pu - w.pd;
    w.f = std::exp(-c.disc[k] * dt);
    if (w.p0 < -1e-12) throw ConfigError("CFL infeasible for this control");
    return w;
}

// The 1-d dynamic program over states (node i, aux level j). When an
// obstacle is present the fixed point is the optimal-stopping envelope:
// stopping acts as one more control whose value is the obstacle.
struct Dp1D {
    std::vector<double> xs;
    std::vector<char> interior;          // per node, w.r.t. the stop domain
    double h = 0, dt = 0;
    FlatControls ctl;
    bool maximize = true;
    double reward_rate = 0.0;
    std::vector<double> aux_values{0.0};
    std::vector<std::vector<int>> up;    // up[j][i]: aux index after arriving at node i from level j
    std::vector<double> exit_values;     // [i * naux + j], meaningful at exit nodes
    std::vector<double> obstacle;        // optional, [i * naux + j]

    std::size_t naux() const { return aux_values.size(); }
    std::size_t n() const { return xs.size(); }
    bool has_obstacle() const { return !obstacle.empty(); }
};

struct DpSolution {
    std::vector<double> v;       // [i * naux + j]
    std::vector<int> policy;     // flattened control index, -1 where not interior
    double residual = 0.0;
    int iterations = 0;
};

// Value of the one-step operator at state (i, j) given current values.
double one_step(const Dp1D& dp, const std::vector<double>& v, int i, int j, std::size_t k) {
    const StepWeights w = weights(dp.ctl, k, dp.h, dp.dt);
    const std::size_t na = dp.naux();
    const int ju = dp.up[j][i + 1];
    const int jd = dp.up[j][i - 1];
    const double vu = dp.interior[i + 1] ? v[(i + 1) * na + ju] : dp.exit_values[(i + 1) * na + ju];
    const double vd = dp.interior[i - 1] ? v[(i - 1) * na + jd] : dp.exit_values[(i - 1) * na + jd];
    return dp.reward_rate * dp.dt + w.f * (w.pu * vu + w.pd * vd + w.p0 * v[i * na + j]);
}

double dp_residual(const Dp1D& dp, const std::vector<double>& v) {
    double r = 0.0;
    const std::size_t na = dp.naux();
    for (std::size_t i = 1; i + 1 < dp.n(); ++i) {
        if (!dp.interior[i]) continue;
        for (std::size_t j = 0; j < na; ++j) {
            double best = dp.maximize ? -std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < dp.ctl.size(); ++k) {
                const double val = one_step(dp, v, static_cast<int>(i), static_cast<int>(j), k);
                best = dp.maximize ? std::max(best, val) : std::min(best, val);
            }
            if (dp.has_obstacle()) {
                const double ob = dp.obstacle[i * na + j];
                best = dp.maximize ? std::max(best, ob) : std::min(best, ob);
            }
            r = std::max(r, std::abs(best - v[i * na + j]) / dp.dt);
        }
    }
    return r;
}

// Howard iteration restricted to one aux level: policy improvement plus an
// exact tridiagonal policy-evaluation solve. Neighbors that leave the level
// (higher aux, already solved) or the domain enter as constants.
void howard_level(const Dp1D& dp, int j, std::vector<double>& v, std::vector<int>& policy,
                  int* iterations) {
    const std::size_t n = dp.n();
    const std::size_t na = dp.naux();
    const std::size_t nc = dp.ctl.size();
    // With an obstacle, control index nc means "stop here".
    const std::size_t n_choices = dp.has_obstacle() ? nc + 1 : nc;

    auto fixed_neighbor = [&](int i, int from_j) -> std::optional<double> {
        const int jj = dp.up[from_j][i];
        if (!dp.interior[i]) return dp.exit_values[i * na + jj];
        if (jj != from_j) return v[i * na + jj];  // already-solved higher level
        return std::nullopt;
    };
    auto choice_value = [&](int i, std::size_t k) {
        if (k == nc) return dp.obstacle[i * na + j];
        return one_step(dp, v, i, j, k);
    };

    std::vector<int> pol(n, -1);
    // Greedy initialization from the current value estimate.
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!dp.interior[i]) continue;
        double best = dp.maximize ? -std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t k = 0; k < n_choices; ++k) {
            const double val = choice_value(static_cast<int>(i), k);
            if (dp.maximize ? val > best : val < best) {
                best = val;
                arg = static_cast<int>(k);
            }
        }
        pol[i] = arg;
    }

    std::vector<double> diag(n), lower(n), upper(n), rhs(n);
    double last_change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 1000; ++it) {
        // Policy evaluation: assemble the linear system row by row. Identity
        // rows pin non-interior nodes to their exit values.
        for (std::size_t i = 0; i < n; ++i) {
            if (i == 0 || i + 1 == n || !dp.interior[i]) {
                diag[i] = 1.0;
                lower[i] = upper[i] = 0.0;
                rhs[i] = dp.exit_values[i * na + j];
                continue;
            }
            if (pol[i] == static_cast<int>(nc)) {  // stopped state
                diag[i] = 1.0;
                lower[i] = upper[i] = 0.0;
                rhs[i] = dp.obstacle[i * na + j];
                continue;
            }
            const StepWeights w = weights(dp.ctl, pol[i], dp.h, dp.dt);
            diag[i] = 1.0 - w.f * w.p0;
            upper[i] = -w.f * w.pu;
            lower[i] = -w.f * w.pd;
            rhs[i] = dp.reward_rate * dp.dt;
            if (auto fu = fixed_neighbor(static_cast<int>(i) + 1, j)) {
                rhs[i] += w.f * w.pu * (*fu);
                upper[i] = 0.0;
            }
            if (auto fd = fixed_neighbor(static_cast<int>(i) - 1, j)) {
                rhs[i] += w.f * w.pd * (*fd);
                lower[i] = 0.0;
            }
        }
        // Thomas algorithm.
        std::vector<double> cp(n), dpv(n);
        cp[0] = upper[0] / diag[0];
        dpv[0] = rhs[0] / diag[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double m = diag[i] - lower[i] * cp[i - 1];
            cp[i] = upper[i] / m;
            dpv[i] = (rhs[i] - lower[i] * dpv[i - 1]) / m;
        }
        std::vector<double> sol(n);
        sol[n - 1] = dpv[n - 1];
        for (int i = static_cast<int>(n) - 2; i >= 0; --i) sol[i] = dpv[i] - cp[i] * sol[i + 1];
        double value_change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (dp.interior[i] && i != 0 && i + 1 != n) {
                value_change = std::max(value_change, std::abs(sol[i] - v[i * na + j]));
                v[i * na + j] = sol[i];
            }
        }

        // Policy improvement. Switch only on strict improvement so equal
        // controls cannot make the policy cycle.
        bool changed = false;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (!dp.interior[i]) continue;
            const double cur = choice_value(static_cast<int>(i), pol[i]);
            double best = cur;
            int arg = pol[i];
            for (std::size_t k = 0; k < n_choices; ++k) {
                const double val = choice_value(static_cast<int>(i), k);
                const double margin = 1e-13 * (1.0 + std::abs(cur));
                if (dp.maximize ? val > best + margin : val < best - margin) {
                    best = val;
                    arg = static_cast<int>(k);
                }
            }
            if (arg != pol[i]) {
                pol[i] = arg;
                changed = true;
            }
        }
        ++(*iterations);
        if (!changed) break;
        if (value_change <= 1e-14 * (1.0 + std::abs(v[(n / 2) * na + j])) &&
            last_change <= 1e-14 * (1.0 + std::abs(v[(n / 2) * na + j]))) {
            break;  // ties keep flipping the policy but the value has settled
        }
        last_change = value_change;
        if (it == 999) throw NumericalError("policy iteration failed to settle");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (dp.interior[i]) policy[i * na + j] = pol[i];
    }
}

// Gauss-Seidel fallback for aux structures the layered solver cannot order.
void gauss_seidel(const Dp1D& dp, std::vector<double>& v, std::vector<int>& policy,
                  int* iterations) {
    const std::size_t n = dp.n();
    const std::size_t na = dp.naux();
    for (long sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (!dp.interior[i]) continue;
            for (std::size_t j = 0; j < na; ++j) {
                double best = dp.maximize ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::infinity();
                int arg = 0;
                for (std::size_t k = 0; k < dp.ctl.size(); ++k) {
                    const double val = one_step(dp, v, static_cast<int>(i), static_cast<int>(j), k);
                    if (dp.maximize ? val > best : val < best) {
                        best = val;
                        arg = static_cast<int>(k);
                    }
                }
                if (dp.has_obstacle()) {
                    const double ob = dp.obstacle[i * na + j];
                    if (dp.maximize ? ob > best : ob < best) {
                        best = ob;
                        arg = static_cast<int>(dp.ctl.size());
                    }
                }
                change = std::max(change, std::abs(best - v[i * na + j]));
                v[i * na + j] = best;
                policy[i * na + j] = arg;
            }
        }
        ++(*iterations);
        if (change <= kFixTol * (1.0 + std::abs(v[(n / 2) * na]))) return;
    }
    throw NumericalError("value iteration hit the sweep cap before converging");
}

DpSolution dp_solve_1d(const Dp1D& dp) {
    const std::size_t n = dp.n();
    const std::size_t na = dp.naux();
    DpSolution out;
    out.v.assign(n * na, 0.0);
    out.policy.assign(n * na, -1);

    // Start from the obstacle when present, otherwise from the exit data
    // linearly blended across the interval.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < na; ++j) {
            if (!dp.interior[i]) {
                out.v[i * na + j] = dp.exit_values[i * na + j];
            } else if (dp.has_obstacle()) {
                out.v[i * na + j] = dp.obstacle[i * na + j];
            } else {
                const double w = static_cast<double>(i) / (n - 1);
                out.v[i * na + j] =
                    (1.0 - w) * dp.exit_values[j] + w * dp.exit_values[(n - 1) * na + j];
            }
        }
    }

    // The layered solver needs aux levels that never decrease along
    // transitions (running-max style); otherwise fall back to Gauss-Seidel.
    bool monotone = true;
    for (std::size_t j = 0; j < na && monotone; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (dp.up[j][i] < static_cast<int>(j)) {
                monotone = false;
                break;
            }
        }
    }

    int iterations = 0;
    if (monotone) {
        for (int j = static_cast<int>(na) - 1; j >= 0; --j) {
            howard_level(dp, j, out.v, out.policy, &iterations);
        }
    } else {
        gauss_seidel(dp, out.v, out.policy, &iterations);
    }
    out.iterations = iterations;
    out.residual = dp_residual(dp, out.v);
    if (out.residual > kResidualTol * (1.0 + std::abs(out.v[(n / 2) * na]))) {
        throw NumericalError("dynamic program residual above tolerance: " + std::to_string(out.residual));
    }
    return out;
}

// Aux grid: every |x| the grid can realize, plus the folded history state.
std::vector<double> build_aux_grid(const std::vector<double>& xs, double aux0) {
    std::vector<double> vals;
    vals.push_back(aux0);
    for (double x : xs) vals.push_back(std::abs(x));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               vals.end());
    return vals;
}

Dp1D build_dp(const LatticeModel& model, const ReducedPayoff& payoff,
              const ConvexDomain& stop_domain, double running_cost,
              const PiecewisePath& history, bool maximize, bool zero_discount = false) {
    if (model.dim() != 1) throw ConfigError("one-dimensional dynamic program requested on a d>1 model");
    Dp1D dp;
    dp.xs = model.grid();
    dp.h = model.h();
    dp.dt = model.dt();
    dp.ctl = flatten(model.controls(), zero_discount);
    dp.maximize = maximize;
    dp.reward_rate = running_cost;

    dp.interior.resize(dp.xs.size());
    for (std::size_t i = 0; i < dp.xs.size(); ++i) {
        dp.interior[i] = stop_domain.contains(scalar_vec(dp.xs[i])) ? 1 : 0;
    }
    if (dp.interior.front() || dp.interior.back()) {
        throw ConfigError("model grid does not cover the stop domain");
    }

    if (payoff.has_aux) {
        const double aux0 = payoff.reduced_state(history);
        dp.aux_values = build_aux_grid(dp.xs, aux0);
    }
    const std::size_t na = dp.aux_values.size();
    dp.up.assign(na, std::vector<int>(dp.xs.size(), 0));
    for (std::size_t j = 0; j < na; ++j) {
        for (std::size_t i = 0; i < dp.xs.size(); ++i) {
            if (!payoff.has_aux) {
                dp.up[j][i] = static_cast<int>(j);
                continue;
            }
            const double nxt = payoff.aux_update(dp.aux_values[j], scalar_vec(dp.xs[i]));
            // Snap to the aux grid (running-max updates land exactly).
            int best = 0;
            double err = std::numeric_limits<double>::infinity();
            for (std::size_t q = 0; q < na; ++q) {
                const double e = std::abs(dp.aux_values[q] - nxt);
                if (e < err) {
                    err = e;
                    best = static_cast<int>(q);
                }
            }
            dp.up[j][i] = best;
        }
    }
    dp.exit_values.assign(dp.xs.size() * na, 0.0);
    for (std::size_t i = 0; i < dp.xs.size(); ++i) {
        for (std::size_t j = 0; j < na; ++j) {
            dp.exit_values[i * na + j] = payoff.terminal(scalar_vec(dp.xs[i]), dp.aux_values[j]);
        }
    }
    return dp;
}

LatticeField field_from(const Dp1D& dp, DpSolution sol) {
    LatticeField f;
    f.xs = dp.xs;
    f.aux_values = dp.aux_values;
    f.values = std::move(sol.v);
    f.control_index = std::move(sol.policy);
    f.interior = dp.interior;
    f.h = dp.h;
    f.dt = dp.dt;
    f.residual_norm = sol.residual;
    f.iterations = sol.iterations;
    return f;
}

}  // namespace

LatticeField sup_expectation(const LatticeModel& model, const ReducedPayoff& payoff,
                             const ConvexDomain& stop_domain, double running_cost,
                             const PiecewisePath& history) {
    Dp1D dp = build_dp(model, payoff, stop_domain, running_cost, history, true);
    return field_from(dp, dp_solve_1d(dp));
}

LatticeField inf_expectation(const LatticeModel& model, const ReducedPayoff& payoff,
                             const ConvexDomain& stop_domain, double running_cost,
                             const PiecewisePath& history) {
    Dp1D dp = build_dp(model, payoff, stop_domain, running_cost, history, false);
    return field_from(dp, dp_solve_1d(dp));
}

namespace {

SnellResult snell_impl(const LatticeModel& model, const ReducedPayoff& obstacle,
                       const ConvexDomain& stop_domain, std::optional<int> horizon_steps,
                       const PiecewisePath* history, bool sup) {
    const PiecewisePath zero(model.dim());
    Dp1D dp = build_dp(model, obstacle, stop_domain, 0.0, history ? *history : zero, sup);
    const std::size_t n = dp.n();
    const std::size_t na = dp.naux();

    // The obstacle is the payoff read at the current state; stopped states
    // (exit nodes) carry it as their value.
    dp.obstacle.assign(n * na, 0.0);
    for (std::size_t s = 0; s < n * na; ++s) dp.obstacle[s] = dp.exit_values[s];

    DpSolution sol;
    if (horizon_steps) {
        // Finite horizon: forced stop at the horizon, exact backward pass.
        std::vector<double> y = dp.obstacle;
        std::vector<int> policy(n * na, -1);
        for (int step = 0; step < *horizon_steps; ++step) {
            std::vector<double> next = y;
            for (std::size_t i = 1; i + 1 < n; ++i) {
                if (!dp.interior[i]) continue;
                for (std::size_t j = 0; j < na; ++j) {
                    double best = sup ? -std::numeric_limits<double>::infinity()
                                      : std::numeric_limits<double>::infinity();
                    int arg = -1;
                    for (std::size_t k = 0; k < dp.ctl.size(); ++k) {
                        const double val = one_step(dp, y, static_cast<int>(i), static_cast<int>(j), k);
                        if (sup ? val > best : val < best) {
                            best = val;
                            arg = static_cast<int>(k);
                        }
                    }
                    const double ob = dp.obstacle[i * na + j];
                    next[i * na + j] = sup ? std::max(best, ob) : std::min(best, ob);
                    policy[i * na + j] = arg;
                }
            }
            y = std::move(next);
        }
        sol.v = std::move(y);
        sol.policy = std::move(policy);
        sol.iterations = *horizon_steps;
    } else {
        sol = dp_solve_1d(dp);
    }

    SnellResult out;
    out.stopping.assign(n * na, 0);
    for (std::size_t s = 0; s < n * na; ++s) {
        out.stopping[s] = std::abs(sol.v[s] - dp.obstacle[s]) <= 1e-11 ? 1 : 0;
    }
    out.envelope = field_from(dp, std::move(sol));
    return out;
}

}  // namespace

SnellResult snell_sup(const LatticeModel& model, const ReducedPayoff& obstacle,
                      const ConvexDomain& stop_domain, std::optional<int> horizon_steps,
                      const PiecewisePath* history) {
    return snell_impl(model, obstacle, stop_domain, horizon_steps, history, true);
}

SnellResult snell_inf(const LatticeModel& model, const ReducedPayoff& obstacle,
                      const ConvexDomain& stop_domain, std::optional<int> horizon_steps,
                      const PiecewisePath* history) {
    return snell_impl(model, obstacle, stop_domain, horizon_steps, history, false);
}

double capacity_exit_before(const LatticeModel& model, const ConvexDomain& O, double T) {
    if (model.dim() != 1) throw ConfigError("capacity_exit_before: one-dimensional models only");
    const auto& xs = model.grid();
    const std::size_t n = xs.size();
    const FlatControls ctl = flatten(model.controls(), /*zero_discount=*/true);
    const int steps = static_cast<int>(std::floor(T / model.dt() + 1e-9));

    std::vector<char> inside(n);
    for (std::size_t i = 0; i < n; ++i) inside[i] = O.contains(scalar_vec(xs[i])) ? 1 : 0;

    std::vector<double> w(n, 0.0), next(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = inside[i] ? 0.0 : 1.0;
    for (int s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!inside[i]) {
                next[i] = 1.0;
                continue;
            }
            if (i == 0 || i + 1 == n) {  // grid edge treated as absorbing inside
                next[i] = w[i];
                continue;
            }
            double best = 0.0;
            for (std::size_t k = 0; k < ctl.size(); ++k) {
                const StepWeights pw = weights(ctl, k, model.h(), model.dt());
                best = std::max(best, pw.pu * w[i + 1] + pw.pd * w[i - 1] + pw.p0 * w[i]);
            }
            next[i] = best;
        }
        std::swap(w, next);
    }
    const int i0 = model.node_index(0.0);
    return std::clamp(w[i0], 0.0, 1.0);
}

double capacity_cascade(const LatticeModel& model, const ConvexDomain& Q, double eps, double x0,
                        int n_casc) {
    if (model.dim() != 1) throw ConfigError("capacity_cascade: one-dimensional models only");
    if (n_casc <= 0) return 1.0;
    const auto& xs = model.grid();
    const std::size_t n = xs.size();
    const int eps_steps = static_cast<int>(std::llround(eps / model.h()));
    if (std::abs(eps_steps * model.h() - eps) > 1e-9) {
        throw ConfigError("capacity_cascade: eps must be a multiple of the grid step");
    }
    const FlatControls ctl = flatten(model.controls(), /*zero_discount=*/true);

    std::vector<char> inQ(n);
    for (std::size_t i = 0; i < n; ++i) inQ[i] = Q.contains(scalar_vec(xs[i])) ? 1 : 0;

    std::vector<double> U(n), Unext(n);
    for (std::size_t i = 0; i < n; ++i) U[i] = inQ[i] ? 1.0 : 0.0;

    // For each leg the pair (position, reference) moves in lockstep, so the
    // leg value for a fixed reference is a one-dimensional absorbing chain:
    // absorbed at |x - ref| = eps with reward U(x) (cascade completed inside
    // Q), absorbed at the Q-boundary with reward 0.
    Dp1D leg;
    leg.xs = xs;
    leg.h = model.h();
    leg.dt = model.dt();
    leg.ctl = ctl;
    leg.maximize = true;
    leg.reward_rate = 0.0;
    leg.up.assign(1, std::vector<int>(n, 0));
    leg.exit_values.assign(n, 0.0);
    leg.interior.assign(n, 0);

    for (int k = 0; k < n_casc; ++k) {
        for (std::size_t r = 0; r < n; ++r) {
            if (!inQ[r]) {
                Unext[r] = 0.0;
                continue;
            }
            const int lo = std::max<int>(0, static_cast<int>(r) - eps_steps);
            const int hi = std::min<int>(static_cast<int>(n) - 1, static_cast<int>(r) + eps_steps);
            const std::size_t m = static_cast<std::size_t>(hi - lo + 1);
            leg.xs.assign(xs.begin() + lo, xs.begin() + hi + 1);
            leg.interior.assign(m, 0);
            leg.exit_values.assign(m, 0.0);
            leg.up.assign(1, std::vector<int>(m, 0));
            for (std::size_t w = 0; w < m; ++w) {
                const std::size_t i = static_cast<std::size_t>(lo) + w;
                const bool completed = std::abs(static_cast<int>(i) - static_cast<int>(r)) >= eps_steps;
                leg.interior[w] = (!completed && inQ[i] && w != 0 && w + 1 != m) ? 1 : 0;
                leg.exit_values[w] = (completed && inQ[i]) ? U[i] : 0.0;
            }
            DpSolution sol = dp_solve_1d(leg);
            const std::size_t wr = r - static_cast<std::size_t>(lo);
            Unext[r] = leg.interior[wr] ? sol.v[wr] : leg.exit_values[wr];
        }
        std::swap(U, Unext);
    }
    const int i0 = model.node_index(x0);
    return std::clamp(U[i0], 0.0, 1.0);
}

double capacity_tree(const LatticeModel& model,
                     const std::function<bool(const std::vector<double>&)>& event, int horizon) {
    if (model.dim() != 1) throw ConfigError("capacity_tree: one-dimensional models only");
    if (horizon > 12) throw ConfigError("capacity_tree: horizon too deep for exact enumeration");
    const FlatControls ctl = flatten(model.controls(), /*zero_discount=*/true);
    const auto& xs = model.grid();
    const int i0 = model.node_index(0.0);

    std::vector<double> visited;
    std::function<double(int, int)> go = [&](int i, int depth) -> double {
        visited.push_back(xs[i]);
        double out;
        if (depth == horizon) {
            out = event(visited) ? 1.0 : 0.0;
        } else if (i == 0 || i + 1 == static_cast<int>(xs.size())) {
            out = event(visited) ? 1.0 : 0.0;  // stuck at the grid edge
        } else {
            double best = 0.0;
            for (std::size_t k = 0; k < ctl.size(); ++k) {
                const StepWeights w = weights(ctl, k, model.h(), model.dt());
                double val = 0.0;
                if (w.pu > 0) val += w.pu * go(i + 1, depth + 1);
                if (w.pd > 0) val += w.pd * go(i - 1, depth + 1);
                if (w.p0 > 0) val += w.p0 * go(i, depth + 1);
                best = std::max(best, val);
            }
            out = best;
        }
        visited.pop_back();
        return out;
    };
    return go(i0, 0);
}

LatticePolicy policy_from_field(const LatticeField& field, const ControlLattice& controls) {
    const FlatControls ctl = flatten(controls);
    auto lookup = [field, ctl](double x, double aux) -> std::size_t {
        const int j = field.aux_index(aux);
        const double s = (x - field.xs.front()) / field.h;
        int i = static_cast<int>(std::llround(s));
        i = std::max(0, std::min(i, static_cast<int>(field.xs.size()) - 1));
        int k = field.control_index[static_cast<std::size_t>(i) * field.aux_values.size() + j];
        if (k < 0) {
            // exit state: walk to the nearest interior node
            int left = i, right = i;
            while (k < 0 && (left > 0 || right + 1 < static_cast<int>(field.xs.size()))) {
                left = std::max(0, left - 1);
                right = std::min(static_cast<int>(field.xs.size()) - 1, right + 1);
                k = std::max(field.control_index[static_cast<std::size_t>(left) * field.aux_values.size() + j],
                             field.control_index[static_cast<std::size_t>(right) * field.aux_values.size() + j]);
            }
            if (k < 0) k = 0;
        }
        if (k >= static_cast<int>(ctl.size())) k = 0;  // snell stop marker
        return static_cast<std::size_t>(k);
    };
    LatticePolicy p;
    p.drift = [lookup, ctl](double x, double aux) { return ctl.alpha[lookup(x, aux)]; };
    p.vol_sq = [lookup, ctl](double x, double aux) { return ctl.vol[lookup(x, aux)]; };
    p.discount = [lookup, ctl](double x, double aux) { return ctl.disc[lookup(x, aux)]; };
    return p;
}

McResult mc_lower_bound(const ControlBounds& bounds, const LatticePolicy& policy,
                        const ReducedPayoff& payoff, const ConvexDomain& stop_domain,
                        double running_cost, const PiecewisePath& history, int n_paths,
                        double dt, std::uint64_t seed, int jobs) {
    if (stop_domain.dim() != 1) throw ConfigError("mc_lower_bound: one-dimensional domains only");
    bounds.validate();
    auto [a, b] = stop_domain.interval_bounds();
    const double x_start = history.final_value()[0];
    if (!(a < x_start && x_start < b)) throw ConfigError("mc_lower_bound: history must end inside the domain");
    const double aux_start = payoff.reduced_state(history);

    std::vector<double> results(static_cast<std::size_t>(n_paths));
    std::atomic<bool> out_of_band{false};
    std::atomic<bool> step_cap_hit{false};

    parallel_for(jobs, static_cast<std::size_t>(n_paths), [&](std::size_t p) {
        auto rng = make_rng(seed, p);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double x = x_start;
        double aux = aux_start;
        double disc = 1.0;
        double acc = 0.0;
        const long max_steps = 100000000;
        for (long s = 0; s < max_steps; ++s) {
            const double al = policy.drift(x, aux);
            const double v2 = policy.vol_sq(x, aux);
            const double bd = policy.discount(x, aux);
            if (!bounds.admits(al, v2, bd)) {
                out_of_band.store(true);
                return;
            }
            const double sig = std::sqrt(v2);
            const double xn = x + al * dt + sig * std::sqrt(dt) * gauss(rng);

            // Running cost accrues before the within-step discount, matching
            // the one-step operator ordering.
            acc += disc * running_cost * dt;
            const double disc_next = disc * std::exp(-bd * dt);

            // Brownian-bridge crossing probabilities for both faces.
            bool crossed = false;
            double exit_x = 0.0;
            if (xn >= b || xn <= a) {
                crossed = true;
                exit_x = xn >= b ? b : a;
            } else if (v2 > 0.0) {
                const double pu = std::exp(-2.0 * (b - x) * (b - xn) / (v2 * dt));
                const double pd = std::exp(-2.0 * (x - a) * (xn - a) / (v2 * dt));
                const double u = unif(rng);
                if (u < pu) {
                    crossed = true;
                    exit_x = b;
                } else if (u < pu + pd) {
                    crossed = true;
                    exit_x = a;
                }
            }
            if (crossed) {
                // Midpoint crossing time: O(dt) bias, of the same order as
                // the Euler step itself.
                const double disc_exit = disc * std::exp(-bd * dt * 0.5);
                if (payoff.has_aux) aux = payoff.aux_update(aux, scalar_vec(exit_x));
                results[p] = acc + disc_exit * payoff.terminal(scalar_vec(exit_x), aux);
                return;
            }
            x = xn;
            disc = disc_next;
            if (payoff.has_aux) aux = payoff.aux_update(aux, scalar_vec(x));
        }
        step_cap_hit.store(true);  // exceptions must not cross thread boundaries
    });

    if (out_of_band.load()) throw ConfigError("mc_lower_bound: policy leaves the control bounds");
    if (step_cap_hit.load()) throw NumericalError("mc_lower_bound: a path failed to exit within the step cap");
    const MeanStdErr ms = mean_stderr(results);
    McResult r;
    r.estimate = ms.mean;
    r.std_error = ms.std_error;
    r.n_paths = n_paths;
    r.seed = seed;
    return r;
}

StepMoments one_step_moments(const LatticeModel& model, double drift, double vol_sq) {
    FlatControls ctl;
    ctl.alpha = {drift};
    ctl.vol = {vol_sq};
    ctl.disc = {0.0};
    const StepWeights w = weights(ctl, 0, model.h(), model.dt());
    if (w.pu < 0.0 || w.pd < 0.0 || w.p0 < 0.0) {
        throw NumericalError("one_step_moments: negative transition weight");
    }
    StepMoments m;
    const double h = model.h();
    m.mean = h * (w.pu - w.pd);
    m.variance = h * h * (w.pu + w.pd) - m.mean * m.mean;
    m.weight_sum = w.pu + w.pd + w.p0;
    return m;
}

double exit_time_closed_form(double L, double r, double x) {
    if (!(L > 0.0) || !(r > 0.0)) throw ConfigError("exit_time_closed_form: need L, r > 0");
    const double ax = std::abs(x);
    if (ax > r + 1e-12) throw ConfigError("exit_time_closed_form: |x| must not exceed r");
    const double xa = std::min(ax, r);
    return (std::exp(L * L * r) - std::exp(L * L * xa)) / (L * L * L) - (r - xa) / L;
}

double expectation_nd(const ConvexDomain& domain, double h, const ControlBounds& bounds,
                      const ControlLattice& controls, const ReducedPayoff& payoff,
                      double running_cost, const VecD& x0, bool maximize) {
    bounds.validate();
    const int d = domain.dim();
    if (d < 2) throw ConfigError("expectation_nd: use the one-dimensional engine for d = 1");
    if (bounds.drift_bound != 0.0) throw ConfigError("expectation_nd: supported only for drift band {0}");
    if (payoff.has_aux) throw ConfigError("expectation_nd: auxiliary state unsupported");

    const double R = domain.bounding_radius();
    const int m = static_cast<int>(std::ceil(R / h)) + 1;
    const int side = 2 * m + 1;
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= side;
    if (total > 20000000) throw ConfigError("expectation_nd: grid too large");

    auto coord = [&](std::size_t idx, int k) {
        for (int q = 0; q < k; ++q) idx /= side;
        return (static_cast<int>(idx % side) - m) * h;
    };
    std::vector<std::size_t> stride(d);
    stride[0] = 1;
    for (int k = 1; k < d; ++k) stride[k] = stride[k - 1] * side;

    std::vector<char> interior(total);
    std::vector<double> v(total);
    VecD x(d);
    for (std::size_t s = 0; s < total; ++s) {
        for (int k = 0; k < d; ++k) x[k] = coord(s, k);
        interior[s] = domain.contains(x) ? 1 : 0;
        v[s] = interior[s] ? 0.0 : payoff.terminal(x, 0.0);
    }

    const double dt = 1.0 / (d * bounds.vol_sq_hi / (h * h));
    const double b0 = maximize ? bounds.discount_lo : bounds.discount_hi;  // optimal for positive values
    std::vector<double> dfs;
    for (double b : controls.discounts) dfs.push_back(b);
    if (dfs.empty()) dfs.push_back(b0);

    for (long sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t s = 0; s < total; ++s) {
            if (!interior[s]) continue;
            bool edge = false;
            for (int k = 0; k < d; ++k) {
                const double c = coord(s, k);
                if (c <= -m * h + h / 2 || c >= m * h - h / 2) edge = true;
            }
            if (edge) continue;
            double best_total = maximize ? -std::numeric_limits<double>::infinity()
                                         : std::numeric_limits<double>::infinity();
            for (double b : dfs) {
                const double f = std::exp(-b * dt);
                // Per-axis volatility choices separate given the discount.
                double sum_axis = 0.0;
                for (int k = 0; k < d; ++k) {
                    double best_axis = maximize ? -std::numeric_limits<double>::infinity()
                                                : std::numeric_limits<double>::infinity();
                    const double pair = v[s + stride[k]] + v[s - stride[k]];
                    for (double vol : controls.vol_sqs) {
                        const double contrib = vol * dt / (2.0 * h * h) * (pair - 2.0 * v[s]);
                        best_axis = maximize ? std::max(best_axis, contrib) : std::min(best_axis, contrib);
                    }
                    sum_axis += best_axis;
                }
                const double val = running_cost * dt + f * (v[s] + sum_axis);
                best_total = maximize ? std::max(best_total, val) : std::min(best_total, val);
            }
            change = std::max(change, std::abs(best_total - v[s]));
            v[s] = best_total;
        }
        if (change <= 1e-12) break;
        if (sweep + 1 == kMaxSweeps) throw NumericalError("expectation_nd hit the sweep cap");
    }

    // Multilinear interpolation at x0 (nearest node is enough at grid scale).
    std::size_t s0 = 0;
    for (int k = 0; k < d; ++k) {
        int ik = static_cast<int>(std::llround(x0[k] / h)) + m;
        ik = std::max(0, std::min(ik, side - 1));
        s0 += static_cast<std::size_t>(ik) * stride[k];
    }
    return v[s0];
}

}  // namespace ppde
