#include <map>
#include <memory>

#include <benchmark/benchmark.h>

#include "dnx/dataset.hpp"
#include "dnx/distill.hpp"
#include "dnx/explain.hpp"
#include "dnx/model.hpp"

namespace {

struct Fixture {
    dnx::Dataset data;
    std::shared_ptr<const dnx::NormalizedAdjacency> adj;
    dnx::SgcSurrogate surrogate;
    std::vector<dnx::NodeId> nodes;
};

// Surrogate distilled from a fixed random GCN, so no training is needed.
const Fixture& fixture(dnx::Benchmark b) {
    static std::map<dnx::Benchmark, Fixture> cache;
    auto it = cache.find(b);
    if (it != cache.end()) return it->second;
    Fixture f;
    f.data = dnx::generate({b, 1});
    f.adj = std::make_shared<const dnx::NormalizedAdjacency>(dnx::normalized_adjacency_power(f.data.graph, 3));
    dnx::GcnModel phi(dnx::GcnParameters::random(static_cast<int>(f.data.features.cols()), 20, 60,
                                                 f.data.num_classes, 1));
    f.surrogate = dnx::distill(phi.predict(*f.adj, f.data.features), f.adj, f.data.features).surrogate;
    f.nodes = f.data.motif_nodes();
    return cache.emplace(b, std::move(f)).first->second;
}

void BM_AdjacencyPower(benchmark::State& state) {
    const auto& f = fixture(static_cast<dnx::Benchmark>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(dnx::normalized_adjacency_power(f.data.graph, 3));
}

void BM_FastDnX(benchmark::State& state) {
    const auto& f = fixture(static_cast<dnx::Benchmark>(state.range(0)));
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(dnx::fastdnx_explain(f.surrogate, f.nodes[i++ % f.nodes.size()]));
}

void BM_DnX(benchmark::State& state) {
    const auto& f = fixture(static_cast<dnx::Benchmark>(state.range(0)));
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(dnx::dnx_explain(f.surrogate, f.nodes[i++ % f.nodes.size()]));
}

void BM_AdjBaseline(benchmark::State& state) {
    const auto& f = fixture(static_cast<dnx::Benchmark>(state.range(0)));
    std::size_t i = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(dnx::adjacency_baseline_explain(*f.adj, f.nodes[i++ % f.nodes.size()]));
}

void datasets(benchmark::internal::Benchmark* b) {
    for (auto d : dnx::all_benchmarks()) b->Arg(static_cast<int>(d));
}

}  // namespace

BENCHMARK(BM_AdjacencyPower)->Apply(datasets)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FastDnX)->Apply(datasets)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DnX)->Apply(datasets)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AdjBaseline)->Apply(datasets)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
