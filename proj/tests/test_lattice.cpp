#include "ppde/lattice.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

using namespace ppde;

namespace {

const PiecewisePath kZero1(1);

ControlBounds exit_bounds(double L) {
    ControlBounds b;
    b.drift_bound = L;
    b.vol_sq_lo = 2.0 / L;
    b.vol_sq_hi = 2.0 * L;
    return b;
}

// Exhaustive optimal stopping on the recombining (node, time) lattice of a
// binary model: enumerate every adapted stopping set over the reachable
// internal states and evaluate it by backward induction.
double brute_force_snell(const LatticeModel& model, const std::vector<double>& obstacle_by_node,
                         int horizon, int i0) {
    struct State {
        int i, t;
    };
    std::vector<State> internal;
    for (int t = 0; t < horizon; ++t) {
        for (int k = -t; k <= t; k += 2) internal.push_back({i0 + k, t});
    }
    REQUIRE(internal.size() <= 16);

    const auto& xs = model.grid();
    auto value_of_rule = [&](unsigned mask) {
        // values on the slice t+1, walked backward to t = 0
        std::map<int, double> next;
        for (int k = -horizon; k <= horizon; k += 2) next[i0 + k] = obstacle_by_node[i0 + k];
        for (int t = horizon - 1; t >= 0; --t) {
            std::map<int, double> cur;
            for (int k = -t; k <= t; k += 2) {
                const int i = i0 + k;
                std::size_t idx = 0;
                bool stop = false;
                for (std::size_t s = 0; s < internal.size(); ++s) {
                    if (internal[s].i == i && internal[s].t == t) {
                        stop = (mask >> s) & 1u;
                        idx = s;
                        break;
                    }
                }
                (void)idx;
                cur[i] = stop ? obstacle_by_node[i] : 0.5 * (next[i + 1] + next[i - 1]);
            }
            next = std::move(cur);
        }
        (void)xs;
        return next[i0];
    };

    double best = -1e300;
    for (unsigned mask = 0; mask < (1u << internal.size()); ++mask) {
        best = std::max(best, value_of_rule(mask));
    }
    return best;
}

}  // namespace

TEST_CASE("sup_expectation: constants are fixed points") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 0.05, b, ControlLattice::from_bounds(b));
    const LatticeField f = sup_expectation(model, ReducedPayoff::constant(3.25), D, 0.0, kZero1);
    for (double v : f.values) CHECK(v == doctest::Approx(3.25));
}

TEST_CASE("sup_expectation: exit-time value matches the closed form") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    const double h = 1.0 / 200;
    LatticeModel model(D, h, b, ControlLattice::from_bounds(b));
    const LatticeField f = sup_expectation(model, ReducedPayoff::constant(0.0), D, 1.0, kZero1);
    const double truth = std::exp(1.0) - 2.0;
    CHECK(std::abs(f.eval(0.0) - truth) <= 3.0 * h);
    for (double x : {-0.75, -0.25, 0.4, 0.8}) {
        CHECK(std::abs(f.eval(x) - exit_time_closed_form(1.0, 1.0, x)) <= 3.0 * h);
    }
}

TEST_CASE("sup_expectation: symmetric chain reproduces linear data exactly") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b;
    b.vol_sq_lo = b.vol_sq_hi = 1.0;
    LatticeModel model(D, 0.01, b, ControlLattice::from_bounds(b));
    const ReducedPayoff g = ReducedPayoff::markovian1d([](double x) { return x < 0 ? 0.0 : 1.0; });
    const LatticeField f = sup_expectation(model, g, D, 0.0, kZero1);
    CHECK(f.eval(0.0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("inf_expectation is dominated by sup_expectation") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 0.02, b, ControlLattice::from_bounds(b));

    const LatticeField cf = inf_expectation(model, ReducedPayoff::constant(-1.5), D, 0.0, kZero1);
    for (double v : cf.values) CHECK(v == doctest::Approx(-1.5));

    const ReducedPayoff g = ReducedPayoff::markovian1d([](double x) { return std::cos(3 * x); });
    const LatticeField hi = sup_expectation(model, g, D, 0.0, kZero1);
    const LatticeField lo = inf_expectation(model, g, D, 0.0, kZero1);
    for (std::size_t s = 0; s < hi.values.size(); ++s) CHECK(lo.values[s] <= hi.values[s] + 1e-10);

    // Adversarial drift shortens the exit time.
    const LatticeField t_lo = inf_expectation(model, ReducedPayoff::constant(0.0), D, 1.0, kZero1);
    CHECK(t_lo.eval(0.0) < std::exp(1.0) - 2.0);
}

TEST_CASE("tower property holds exactly on the discrete model") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    const ConvexDomain inner = ConvexDomain::interval(-0.5, 0.5);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 0.025, b, ControlLattice::from_bounds(b));
    const ReducedPayoff g = ReducedPayoff::markovian1d([](double x) { return std::sin(2 * x) + x * x; });
    const LatticeField whole = sup_expectation(model, g, D, 0.5, kZero1);

    // Two-stage: restrict to the inner domain with the outer values as data.
    const ReducedPayoff stage = ReducedPayoff::markovian1d([&whole](double x) { return whole.eval(x); });
    const LatticeField two = sup_expectation(model, stage, inner, 0.5, kZero1);
    for (std::size_t i = 0; i < two.xs.size(); ++i) {
        CHECK(two.values[i] == doctest::Approx(whole.values[i]).epsilon(1e-10));
    }
}

TEST_CASE("snell envelope: constant obstacle stops everywhere") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 0.05, b, ControlLattice::from_bounds(b));
    const SnellResult s = snell_sup(model, ReducedPayoff::constant(2.0), D);
    for (std::size_t i = 0; i < s.envelope.values.size(); ++i) {
        CHECK(s.envelope.values[i] == doctest::Approx(2.0));
        CHECK(s.stopping[i] == 1);
    }
}

TEST_CASE("snell envelope equals brute force on small binary trees") {
    // Binary chain: vol^2 = 2 with dt = h^2/2 makes p = 1/2 each way.
    const double h = 0.25;
    const ConvexDomain D = ConvexDomain::interval(-2.0, 2.0);
    ControlBounds b;
    b.vol_sq_lo = b.vol_sq_hi = 2.0;
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> uo(-1.0, 1.0);
    for (int inst = 0; inst < 20; ++inst) {
        LatticeModel model(D, h, b, ControlLattice::from_bounds(b), h * h / 2.0);
        std::vector<double> obstacle(model.grid().size());
        for (double& o : obstacle) o = uo(rng);
        const ReducedPayoff obs = ReducedPayoff::markovian1d([&obstacle, &model](double x) {
            return obstacle[static_cast<std::size_t>(model.node_index(x))];
        });
        const int horizon = 3 + (inst % 2);
        const SnellResult s = snell_sup(model, obs, D, horizon);
        const double dp = s.envelope.value_at(model.node_index(0.0));
        const double bf = brute_force_snell(model, obstacle, horizon, model.node_index(0.0));
        CHECK(dp == doctest::Approx(bf).epsilon(1e-12));
    }
}

TEST_CASE("snell envelope dominates the obstacle and is a martingale before stopping") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 0.05, b, ControlLattice::from_bounds(b));
    const ReducedPayoff obs = ReducedPayoff::markovian1d([](double x) { return std::abs(x); });
    const SnellResult s = snell_sup(model, obs, D);
    const auto& xs = s.envelope.xs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(s.envelope.values[i] >= std::abs(xs[i]) - 1e-10);
    }
    // One-step equality at continuation states: the envelope residual is the
    // solver's own certificate.
    CHECK(s.envelope.residual_norm <= 1e-9);

    // A field that is already a sup one-step fixed point stops immediately.
    const ReducedPayoff g = ReducedPayoff::markovian1d([](double x) { return x; });
    const LatticeField mart = sup_expectation(model, g, D, 0.0, kZero1);
    const ReducedPayoff obs2 = ReducedPayoff::markovian1d([&mart](double x) { return mart.eval(x); });
    const SnellResult s2 = snell_sup(model, obs2, D);
    int stopped = 0;
    for (char c : s2.stopping) stopped += c;
    CHECK(stopped == static_cast<int>(s2.stopping.size()));
}

TEST_CASE("capacities: impossible and certain events, radius monotonicity") {
    const ConvexDomain D = ConvexDomain::interval(-2.0, 2.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 0.1, b, ControlLattice::from_bounds(b));

    // Exiting a huge ball in no time is impossible.
    CHECK(capacity_exit_before(model, ConvexDomain::interval(-1.9, 1.9), 0.05) == doctest::Approx(0.0));
    // Zero cascades complete immediately.
    CHECK(capacity_cascade(model, D, 0.5, 0.0, 0) == doctest::Approx(1.0));

    // Exit capacity decreases with the ball radius.
    double prev = 1.0;
    for (double r : {0.4, 0.8, 1.2, 1.6}) {
        const double c = capacity_exit_before(model, ConvexDomain::interval(-r, r), 1.0);
        CHECK(c <= prev + 1e-12);
        prev = c;
    }

    // Tree enumeration agrees on tiny instances: certain and impossible.
    const double cap1 = capacity_tree(model, [](const std::vector<double>&) { return true; }, 3);
    CHECK(cap1 == doctest::Approx(1.0));
    const double cap0 = capacity_tree(
        model, [](const std::vector<double>& path) { return std::abs(path.back()) > 10.0; }, 3);
    CHECK(cap0 == doctest::Approx(0.0));
}

TEST_CASE("cascade capacity decreases in n and vanishes for wide steps") {
    const ConvexDomain Q = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(Q, 0.05, b, ControlLattice::from_bounds(b));
    double prev = 1.0;
    for (int n = 1; n <= 5; ++n) {
        const double c = capacity_cascade(model, Q, 0.25, 0.0, n);
        CHECK(c <= prev + 1e-12);
        prev = c;
    }
}

TEST_CASE("running-max payoffs ride the auxiliary state") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b;
    b.vol_sq_lo = b.vol_sq_hi = 2.0;
    LatticeModel model(D, 0.05, b, ControlLattice::from_bounds(b));
    const ReducedPayoff lookback = ReducedPayoff::running_max_abs([](double m) { return m; });
    const LatticeField f = sup_expectation(model, lookback, D, 0.0, kZero1);

    // From a fresh start the exit point is the running max: value 1 at 0.
    CHECK(f.eval(0.0, 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    // A history that already peaked at 1 makes the payoff certain.
    const PiecewisePath peaked = lin_interp({{1.0, 1.0 - 1e-12}, {2.0, 0.0}});
    const double aux0 = lookback.reduced_state(peaked);
    CHECK(f.eval(0.0, aux0) == doctest::Approx(1.0).epsilon(1e-6));
    // Aux monotonicity: a larger running max cannot lower the value.
    CHECK(f.eval(0.0, 0.5) >= f.eval(0.0, 0.0) - 1e-10);
}

TEST_CASE("mc_lower_bound: degenerate dynamics are exact") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b;
    b.drift_bound = 1.0;
    b.vol_sq_lo = 1e-6;
    b.vol_sq_hi = 1.0;
    LatticePolicy pol;
    pol.drift = [](double, double) { return 1.0; };
    pol.vol_sq = [](double, double) { return 1e-6; };
    pol.discount = [](double, double) { return 0.0; };
    const McResult r = mc_lower_bound(b, pol, ReducedPayoff::constant(0.0), D, 1.0, kZero1, 200,
                                      1e-4, 7, 2);
    CHECK(r.estimate == doctest::Approx(1.0).epsilon(2e-3));  // deterministic drift to the wall
    CHECK(r.std_error <= 2e-3);
}

TEST_CASE("mc_lower_bound under the extracted optimal policy hits the closed form") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    LatticeModel model(D, 1.0 / 100, b, ControlLattice::from_bounds(b));
    const LatticeField f = sup_expectation(model, ReducedPayoff::constant(0.0), D, 1.0, kZero1);
    const LatticePolicy pol = policy_from_field(f, model.controls());
    const McResult r = mc_lower_bound(b, pol, ReducedPayoff::constant(0.0), D, 1.0, kZero1, 20000,
                                      1e-3, 99, 2);
    const double truth = std::exp(1.0) - 2.0;
    CHECK(std::abs(r.estimate - truth) <= 3.0 * r.std_error + 2e-3);

    // A suboptimal constant policy stays below the dynamic-programming value.
    LatticePolicy sub;
    sub.drift = [](double, double) { return 0.0; };
    sub.vol_sq = [](double, double) { return 2.0; };
    sub.discount = [](double, double) { return 0.0; };
    const McResult rs = mc_lower_bound(b, sub, ReducedPayoff::constant(0.0), D, 1.0, kZero1, 20000,
                                       1e-3, 100, 2);
    CHECK(rs.estimate <= f.eval(0.0) + 3.0 * rs.std_error);
    CHECK(rs.estimate < truth);

    // Out-of-band policies are rejected.
    LatticePolicy bad = sub;
    bad.drift = [](double, double) { return 5.0; };
    CHECK_THROWS_AS(mc_lower_bound(b, bad, ReducedPayoff::constant(0.0), D, 1.0, kZero1, 10, 1e-3,
                                   1, 1),
                    ConfigError);
}

TEST_CASE("exit_time_closed_form pinned values") {
    CHECK(exit_time_closed_form(1.0, 1.0, 1.0) == doctest::Approx(0.0));
    CHECK(exit_time_closed_form(1.0, 1.0, -1.0) == doctest::Approx(0.0));
    CHECK(exit_time_closed_form(1.0, 1.0, 0.0) == doctest::Approx(std::exp(1.0) - 2.0));
    CHECK(exit_time_closed_form(1.0, 1.0, 0.5) ==
          doctest::Approx(std::exp(1.0) - std::exp(0.5) - 0.5));
    CHECK(exit_time_closed_form(1.0, 1.0, 0.5) == doctest::Approx(exit_time_closed_form(1.0, 1.0, -0.5)));
    CHECK_THROWS_AS(exit_time_closed_form(1.0, 1.0, 1.5), ConfigError);
}

TEST_CASE("hitting times vary continuously with the starting history") {
    // Monte Carlo estimate of E|h(x1) - h(x2)| under common random numbers,
    // dominated by a fitted modulus of the history distance.
    const double a = -1.0, b = 1.0;
    std::vector<std::pair<double, double>> samples;
    for (double delta : {0.4, 0.2, 0.1, 0.05, 0.02, 1e-6}) {
        std::mt19937_64 rng(1234);  // common random numbers across the pair
        std::normal_distribution<double> gauss(0.0, 1.0);
        const int paths = 400;
        const double dt = 5e-4;
        double acc = 0.0;
        for (int p = 0; p < paths; ++p) {
            double x1 = 0.0, x2 = delta;
            double t1 = -1.0, t2 = -1.0;
            double t = 0.0;
            while (t1 < 0.0 || t2 < 0.0) {
                const double dw = std::sqrt(2.0 * dt) * gauss(rng);
                t += dt;
                if (t1 < 0.0) {
                    x1 += dw;
                    if (x1 <= a || x1 >= b) t1 = t;
                }
                if (t2 < 0.0) {
                    x2 += dw;
                    if (x2 <= a || x2 >= b) t2 = t;
                }
            }
            acc += std::abs(t1 - t2);
        }
        samples.emplace_back(delta, acc / paths);
    }
    const ModulusFit fit = fit_modulus(samples);
    CHECK(fit.dominates(samples, 1e-12));
    CHECK(samples.back().second <= 5e-3);  // near-identical histories
}

TEST_CASE("expectation_nd: exit time of the planar ball") {
    const ConvexDomain ball = ConvexDomain::ball(2, 1.0);
    ControlBounds b;
    b.vol_sq_lo = 1.0;
    b.vol_sq_hi = 2.0;
    ControlLattice c;
    c.vol_sqs = {2.0, 1.0};
    c.drifts = {0.0};
    c.discounts = {0.0};
    const double v = expectation_nd(ball, 0.05, b, c, ReducedPayoff::constant(0.0), 1.0,
                                    VecD::Zero(2), true);
    // sup of E[exit time] picks the smallest volatility: (r^2-|x|^2)/(d*lo).
    CHECK(v == doctest::Approx(0.5).epsilon(0.08));
    CHECK_THROWS_AS(expectation_nd(ball, 0.05, exit_bounds(1.0), c, ReducedPayoff::constant(0.0),
                                   1.0, VecD::Zero(2), true),
                    ConfigError);
}

TEST_CASE("one-step local consistency across the control lattice") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.5);
    b.discount_hi = 1.0;
    LatticeModel model(D, 0.02, b, ControlLattice::from_bounds(b, 3));
    for (double a : model.controls().drifts) {
        for (double v : model.controls().vol_sqs) {
            const StepMoments m = one_step_moments(model, a, v);
            CHECK(m.weight_sum == doctest::Approx(1.0));
            CHECK(m.mean == doctest::Approx(a * model.dt()));
            // Variance deviates from v*dt only by the upwinding correction.
            CHECK(std::abs(m.variance - v * model.dt()) <=
                  std::abs(a) * model.h() * model.dt() + 1e-15);
        }
    }
}

TEST_CASE("model construction guards") {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b = exit_bounds(1.0);
    CHECK_THROWS_AS(LatticeModel(D, 0.1, b, ControlLattice::from_bounds(b), 1.0), ConfigError);
    ControlLattice wide = ControlLattice::from_bounds(b);
    wide.drifts.push_back(5.0);
    CHECK_THROWS_AS(LatticeModel(D, 0.1, b, wide), ConfigError);
    ControlBounds bad;
    bad.vol_sq_lo = 0.0;
    bad.vol_sq_hi = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
