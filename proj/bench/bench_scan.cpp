#include "siad/scanner.hpp"

#include <benchmark/benchmark.h>

#include <numbers>

using namespace siad;

namespace {

/// Balanced series RLC per phase behind an ideal 50 Hz source.
Circuit rlc_circuit() {
    constexpr double third = 2.0 * std::numbers::pi / 3.0;
    Circuit c;
    c.add_vsource("vs", {"pa", "pb", "pc"}, FundamentalSourceSpec::balanced(326.6, 50.0, 0.0, -third, third));
    for (std::string p : {"a", "b", "c"}) {
        c.add_resistor("r" + p, "p" + p, "m" + p, 0.1);
        c.add_inductor("l" + p, "m" + p, "k" + p, 0.1);
        c.add_capacitor("c" + p, "k" + p, "0", 100e-6);
    }
    c.set_pos({"pa", "pb", "pc"});
    return c;
}

ScanConfig bench_config() {
    ScanConfig cfg;
    cfg.frame = Frame::Abc;
    cfg.strategy = Strategy::ParallelCurrent;
    cfg.frequencies = {5, 10, 20, 35, 60, 90, 150, 240};
    cfg.settle_time = 0.1;
    cfg.window = {0.2, 0.4};
    return cfg;
}

/// Full two-stage scan; the argument is the OpenMP job count (1 is the serial reference).
void bm_scan(benchmark::State& state) {
    const Circuit c = rlc_circuit();
    const ScanConfig cfg = bench_config();
    const int jobs = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto r = scan(c, cfg, jobs);
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(cfg.frequencies.size()) * 3);
}

}  // namespace

BENCHMARK(bm_scan)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
