#include <benchmark/benchmark.h>

#include <cmath>

#include "evans/evans_per.hpp"
#include "evans/parallel.hpp"
#include "evans/spectra.hpp"

using namespace evans;

namespace {

std::vector<Complex> circleNodes(int n) {
    std::vector<Complex> pts;
    for (int i = 0; i < n; ++i) pts.push_back(1.25 + 0.25 * std::polar(1.0, 2 * M_PI * i / n));
    return pts;
}

const SpectralSystem& pulseMember() {
    static const SpectralSystem sys = pulseModel().member(20.0);
    return sys;
}

// fresh context per iteration: contexts cache propagations per lambda
template <class Eval>
void nodes(benchmark::State& state, Eval eval) {
    const NumericPolicy pol;
    const auto pts = circleNodes(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        const PeriodicEvansContext ctx(pulseMember(), pol);
        const EvansFn f = [&](Complex l) { return periodicEvans(ctx, l, Complex(0.0, 1.0)); };
        benchmark::DoNotOptimize(eval(f, pts));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_NodesParallel(benchmark::State& state) { nodes(state, evaluateNodes); }
void BM_NodesSerial(benchmark::State& state) { nodes(state, evaluateNodesSerial); }

void BM_Winding(benchmark::State& state) {
    const NumericPolicy pol;
    for (auto _ : state) {
        const PeriodicEvansContext ctx(pulseMember(), pol);
        const EvansFn f = [&](Complex l) { return periodicEvans(ctx, l, Complex(0.0, 1.0)); };
        benchmark::DoNotOptimize(windingNumber(f, Contour::circle(1.25, 0.25), pol));
    }
}

}  // namespace

BENCHMARK(BM_NodesParallel)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NodesSerial)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Winding)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
