// Serial reference vs batched OpenMP kernels on random windows.
//
//   bench_kernels --benchmark_filter=Backward

#include <benchmark/benchmark.h>

#include <random>

#include "rnnmpc/lstm.hpp"

using namespace rnnmpc;

namespace {

WindowBatch random_batch(int horizon, Eigen::Index n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    WindowBatch b;
    b.horizon = horizon;
    b.inputs = Eigen::MatrixXd::NullaryExpr(kSlotWidth * horizon, n, [&] { return U(rng); });
    for (int t = 1; t < horizon; ++t) b.inputs.middleRows(kSlotWidth * t, 2).setZero();
    b.targets = Eigen::MatrixXd::NullaryExpr(kOutputSize, n, [&] { return U(rng); });
    return b;
}

LstmNetwork make_net(int nodes)
{
    NetworkShape s;
    s.hidden = {nodes, nodes};
    return LstmNetwork::initialized(s, 1);
}

void BM_ForwardReference(benchmark::State& st)
{
    const auto net = make_net(static_cast<int>(st.range(0)));
    const auto b = random_batch(10, st.range(1), 2);
    for (auto _ : st)
        for (Eigen::Index k = 0; k < b.size(); ++k) benchmark::DoNotOptimize(reference::forward(net, b.inputs.col(k)));
    st.SetItemsProcessed(st.iterations() * b.size());
}

void BM_ForwardBatched(benchmark::State& st)
{
    const auto net = make_net(static_cast<int>(st.range(0)));
    const auto b = random_batch(10, st.range(1), 2);
    for (auto _ : st) benchmark::DoNotOptimize(forward_batch(net, b.inputs));
    st.SetItemsProcessed(st.iterations() * b.size());
}

void BM_BackwardReference(benchmark::State& st)
{
    const auto net = make_net(static_cast<int>(st.range(0)));
    const auto b = random_batch(10, st.range(1), 2);
    for (auto _ : st) benchmark::DoNotOptimize(reference::backward(net, b));
    st.SetItemsProcessed(st.iterations() * b.size());
}

void BM_BackwardBatched(benchmark::State& st)
{
    const auto net = make_net(static_cast<int>(st.range(0)));
    const auto b = random_batch(10, st.range(1), 2);
    for (auto _ : st) benchmark::DoNotOptimize(backward(net, b));
    st.SetItemsProcessed(st.iterations() * b.size());
}

} // namespace

#define KERNEL_ARGS ->ArgsProduct({{16, 64}, {64, 512}})->Unit(benchmark::kMicrosecond)

BENCHMARK(BM_ForwardReference) KERNEL_ARGS;
BENCHMARK(BM_ForwardBatched) KERNEL_ARGS;
BENCHMARK(BM_BackwardReference) KERNEL_ARGS;
BENCHMARK(BM_BackwardBatched) KERNEL_ARGS;

BENCHMARK_MAIN();
