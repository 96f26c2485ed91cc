#include <benchmark/benchmark.h>

#include <random>

#include "eagle/model.hpp"
#include "eagle/snapshots.hpp"
#include "eagle/tensor.hpp"

namespace {

using namespace eagle;

struct Fixture {
    OrderTable table;
    SupplyGraph graph;
    SplitBundle bundle;
    GraphTensors gt;
    ModelConfig config;
    ModelParams params;

    Fixture() {
        SyntheticConfig sc;
        sc.n_regions = 8;
        sc.n_days = 60;
        table = generate_synthetic(sc, 7);
        graph = build_graph(table);
        bundle = build_bundle(table, graph.index);
        gt = GraphTensors::from_graph(graph);
        params = init_params(config, bundle.train_positive_rate(), 7);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

void bm_forward(benchmark::State& state) {
    auto& f = fixture();
    const Snapshot& snap = f.bundle.snapshots.front();
    for (auto _ : state) {
        ForwardResult out = forward(snap, f.gt, f.params, f.config);
        benchmark::DoNotOptimize(out.p_hat.values().data());
    }
}
BENCHMARK(bm_forward);

void bm_forward_backward(benchmark::State& state) {
    auto& f = fixture();
    const Snapshot& snap = f.bundle.snapshots.front();
    for (auto _ : state) {
        ForwardResult out = forward(snap, f.gt, f.params, f.config);
        ad::Tensor loss = multitask_loss(out, snap, f.config);
        ad::backward(loss);
        for (auto& t : f.params.all()) t.zero_grad();
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(bm_forward_backward);

void bm_segment_softmax(benchmark::State& state) {
    size_t n_edges = static_cast<size_t>(state.range(0));
    size_t n_segments = n_edges / 16;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<double> scores(n_edges);
    std::vector<int32_t> seg(n_edges);
    for (size_t i = 0; i < n_edges; ++i) {
        scores[i] = u(rng);
        seg[i] = static_cast<int32_t>(i % n_segments);
    }
    ad::Tensor s = ad::Tensor::from({n_edges}, scores);
    for (auto _ : state) {
        ad::Tensor y = ad::segment_softmax(s, seg, n_segments);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(bm_segment_softmax)->Arg(1 << 10)->Arg(1 << 14);

void bm_matmul(benchmark::State& state) {
    size_t n = static_cast<size_t>(state.range(0));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> av(n * n), bv(n * n);
    for (auto& x : av) x = u(rng);
    for (auto& x : bv) x = u(rng);
    ad::Tensor a = ad::Tensor::from({n, n}, av);
    ad::Tensor b = ad::Tensor::from({n, n}, bv);
    for (auto _ : state) {
        ad::Tensor c = ad::matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
