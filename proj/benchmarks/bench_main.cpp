#include "ppde/frozen_pde.hpp"
#include "ppde/lattice.hpp"
#include "ppde/paths.hpp"
#include "ppde/perron.hpp"
#include "ppde/uvm.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace ppde;

namespace {

PiecewisePath random_path(int segments, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    for (int i = 1; i <= segments; ++i) pts.emplace_back(static_cast<double>(i), gauss(rng));
    return lin_interp(pts);
}

void BM_FrechetDistance(benchmark::State& state) {
    const PiecewisePath a = random_path(static_cast<int>(state.range(0)), 1);
    const PiecewisePath b = random_path(static_cast<int>(state.range(0)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(de_distance(a, b, 0.02));
    }
}
BENCHMARK(BM_FrechetDistance)->Arg(4)->Arg(16);

void BM_ExitTimeSolve(benchmark::State& state) {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b;
    b.drift_bound = 1.0;
    b.vol_sq_lo = 2.0;
    b.vol_sq_hi = 2.0;
    const double h = 1.0 / static_cast<double>(state.range(0));
    const PiecewisePath zero(1);
    for (auto _ : state) {
        LatticeModel model(D, h, b, ControlLattice::from_bounds(b));
        benchmark::DoNotOptimize(
            sup_expectation(model, ReducedPayoff::constant(0.0), D, 1.0, zero));
    }
}
BENCHMARK(BM_ExitTimeSolve)->Arg(100)->Arg(400);

void BM_FrozenSolve(benchmark::State& state) {
    FrozenProblem p;
    p.domain = ConvexDomain::interval(-1.0, 1.0);
    p.generator = make_g_upper(1, 1.0, 1.0);
    p.boundary_data = {{-1.0, 0.0}, {1.0, 0.0}};
    p.h = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_dirichlet(p));
    }
}
BENCHMARK(BM_FrozenSolve)->Arg(100)->Arg(400);

void BM_PerronSweep(benchmark::State& state) {
    const GeneratorSpec G = uvm_generator(1.0, 0.0, std::sqrt(2.0), std::sqrt(2.0));
    const ConvexDomain Q = ConvexDomain::interval(-1.0, 1.0);
    const PiecewisePath zero(1);
    PerronParams params;
    params.h = 1.0 / 100;
    params.m_list = {static_cast<int>(state.range(0))};
    params.closure_mode = ClosureMode::Exact;
    params.with_capacity = false;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sweep(zero, 0.25, Q, G, ReducedPayoff::constant(1.0), params));
    }
}
BENCHMARK(BM_PerronSweep)->Arg(2)->Arg(4);

void BM_McLowerBound(benchmark::State& state) {
    const ConvexDomain D = ConvexDomain::interval(-1.0, 1.0);
    ControlBounds b;
    b.vol_sq_lo = b.vol_sq_hi = 2.0;
    LatticePolicy pol;
    pol.drift = [](double, double) { return 0.0; };
    pol.vol_sq = [](double, double) { return 2.0; };
    pol.discount = [](double, double) { return 0.0; };
    const PiecewisePath zero(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mc_lower_bound(b, pol, ReducedPayoff::constant(0.0), D, 1.0, zero,
                                                static_cast<int>(state.range(0)), 1e-3, 7, 1));
    }
}
BENCHMARK(BM_McLowerBound)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
