#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "ctxdesc/spi.hpp"

using namespace ctxdesc;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void distances(benchmark::State& state, Exec exec) {
    const std::size_t n = state.range(0), d = 4;
    auto rows = uniform(n * d, 0, 1, 1);
    auto target = uniform(d, 0, 1, 2);
    std::vector<double> weights{4, 1, 1, 0.5}, out(n);
    for (auto _ : state) {
        weighted_sq_distances(target.data(), rows.data(), weights.data(), n, d, out.data(), exec);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}

const Surrogate& toy_surrogate() {
    static const Surrogate s = [] {
        SpiSpec spec;
        spec.params = {"x", "y"};
        spec.bounds = {{-1, 1}, {-1, 1}};
        spec.tol = 1e-6;
        spec.budget = 600;
        BatchProvider f = [](const std::vector<Point>& pts) {
            std::vector<double> out;
            for (const auto& p : pts) {
                double x = p.at("x"), y = p.at("y");
                out.push_back(std::exp(-x * x - y * y) + 0.3 * x * y);
            }
            return out;
        };
        return discover(spec, f).surrogate;
    }();
    return s;
}

void surrogate_batch(benchmark::State& state, Exec exec) {
    const Surrogate& s = toy_surrogate();
    const std::size_t n = state.range(0);
    auto pts = uniform(2 * n, -1, 1, 3);
    std::vector<double> out(n);
    for (auto _ : state) {
        spi_eval_batch(s, pts.data(), n, out.data(), exec);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
    state.counters["samples"] = static_cast<double>(s.sample_count());
}

}  // namespace

BENCHMARK_CAPTURE(distances, serial, Exec::Serial)->Range(1 << 10, 1 << 18);
BENCHMARK_CAPTURE(distances, parallel, Exec::Parallel)->Range(1 << 10, 1 << 18);
BENCHMARK_CAPTURE(surrogate_batch, serial, Exec::Serial)->Range(1 << 6, 1 << 12);
BENCHMARK_CAPTURE(surrogate_batch, parallel, Exec::Parallel)->Range(1 << 6, 1 << 12);

BENCHMARK_MAIN();
