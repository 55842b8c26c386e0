#include <benchmark/benchmark.h>

#include "fbsfde/coupled.hpp"
#include "fbsfde/gabsde.hpp"
#include "fbsfde/lq.hpp"
#include "fbsfde/presets.hpp"
#include "fbsfde/sfde.hpp"

namespace {

using namespace fbsfde;

BasisConfig state_basis()
{
    BasisConfig b;
    b.degree = 2;
    b.features = {FeatureKind::state, FeatureKind::memory};
    return b;
}

void BM_SampleBrownian(benchmark::State& state)
{
    const auto paths = static_cast<std::size_t>(state.range(0));
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.5, 1.0 / 64.0);
    for (auto _ : state) benchmark::DoNotOptimize(sample_brownian(g, paths, 1, 1));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(paths * g.size()));
}
BENCHMARK(BM_SampleBrownian)->Arg(1000)->Arg(10000);

void BM_SimulateSfde(benchmark::State& state)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 1.0 / 64.0);
    const auto model = presets::make_sfde("windowed", g);
    const BrownianEnsemble b = sample_brownian(g, static_cast<std::size_t>(state.range(0)), 1, 1);
    for (auto _ : state) benchmark::DoNotOptimize(simulate_sfde(model.coeffs, model.rho, b));
}
BENCHMARK(BM_SimulateSfde)->Arg(1000)->Arg(10000);

void BM_RegressCondexp(benchmark::State& state)
{
    const auto rows = state.range(0);
    const RowMatrix design = RowMatrix::Random(rows, 10);
    const RowMatrix targets = RowMatrix::Random(rows, 2);
    for (auto _ : state) benchmark::DoNotOptimize(regress_condexp(targets, design));
}
BENCHMARK(BM_RegressCondexp)->Arg(1000)->Arg(10000);

void BM_SolveGabsde(benchmark::State& state)
{
    const TimeGrid g = build_time_grid(0.0, 1.0, 0.5, 1.0 / 32.0);
    const auto model = presets::make_gabsde("f2_affine", g);
    const BrownianEnsemble b = sample_brownian(g, static_cast<std::size_t>(state.range(0)), 1, 1);
    const PolynomialEngine engine(BasisConfig{});
    for (auto _ : state) benchmark::DoNotOptimize(solve_gabsde(model.generator, model.terminal, b, engine));
}
BENCHMARK(BM_SolveGabsde)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_SolvePicardCanonical(benchmark::State& state)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 0.0, 1.0 / 32.0);
    const FbsfdeSystem sys = presets::make_fbsfde("canonical_monotone", g);
    const BrownianEnsemble b = sample_brownian(g, static_cast<std::size_t>(state.range(0)), 1, 1);
    const PolynomialEngine engine(state_basis());
    for (auto _ : state) benchmark::DoNotOptimize(solve_picard(sys, b, engine));
}
BENCHMARK(BM_SolvePicardCanonical)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_LqCost(benchmark::State& state)
{
    const TimeGrid g = build_time_grid(0.5, 1.0, 1.0 / 32.0, 1.0 / 32.0);
    const LqProblem p = presets::make_lq("delay", g);
    const BrownianEnsemble b = sample_brownian(g, static_cast<std::size_t>(state.range(0)), 1, 1);
    const PolynomialDirection v = PolynomialDirection::random(1, 1, 3, 0);
    for (auto _ : state) {
        const ProcessEnsemble x = simulate_controlled(p, v, b);
        benchmark::DoNotOptimize(cost_J(p, v, x, b));
    }
}
BENCHMARK(BM_LqCost)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
