// Micro benchmarks of the device routines against the Eigen host versions.
// Timings include the final wait on the result but not host<->device copies.

#include <benchmark/benchmark.h>

#include "blocklin/bench.hpp"
#include "blocklin/cholesky.hpp"
#include "blocklin/glm.hpp"
#include "blocklin/matmul.hpp"
#include "blocklin/trisolve.hpp"

using namespace blocklin;

namespace {

void BM_GemmDevice(benchmark::State& st) {
    const auto n = static_cast<Eigen::Index>(st.range(0));
    const DeviceMatrix a = to_device(HostMatrix::Random(n, n));
    const DeviceMatrix b = to_device(HostMatrix::Random(n, n));
    for (auto _ : st) {
        DeviceMatrix c = gemm(a, b);
        c.wait();
    }
    st.SetItemsProcessed(st.iterations() * 2 * n * n * n);
}

void BM_GemmEigen(benchmark::State& st) {
    const auto n = static_cast<Eigen::Index>(st.range(0));
    const HostMatrix a = HostMatrix::Random(n, n);
    const HostMatrix b = HostMatrix::Random(n, n);
    for (auto _ : st) {
        HostMatrix c = a * b;
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * 2 * n * n * n);
}

void BM_CholeskyDevice(benchmark::State& st) {
    const DeviceMatrix a = to_device(generate_toeplitz(static_cast<std::size_t>(st.range(0))));
    for (auto _ : st) {
        DeviceMatrix l = cholesky_decompose(a);
        l.wait();
    }
}

void BM_CholeskyEigen(benchmark::State& st) {
    const HostMatrix a = generate_toeplitz(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) {
        Eigen::LLT<HostMatrix> llt(a);
        benchmark::DoNotOptimize(llt.matrixLLT().data());
    }
}

void BM_CholeskyGradient(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const DeviceMatrix l = cholesky_decompose(to_device(generate_toeplitz(n)));
    const DeviceMatrix adj = to_device(HostMatrix::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                                       ViewTag::Lower);
    for (auto _ : st) {
        DeviceMatrix g = cholesky_gradient(l, adj);
        g.wait();
    }
}

void BM_TriSolveDevice(benchmark::State& st) {
    const auto n = static_cast<Eigen::Index>(st.range(0));
    const HostMatrix l = generate_toeplitz(static_cast<std::size_t>(n)).llt().matrixL();
    const DeviceMatrix dl = to_device(l, ViewTag::Lower);
    const DeviceMatrix b = to_device(HostMatrix::Random(n, 8));
    TriSolveConfig cfg;
    cfg.offload_min_n = 0;
    for (auto _ : st) {
        DeviceMatrix x = triangular_solve(dl, b, cfg);
        x.wait();
    }
}

void BM_GlmLogistic(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const LogisticData d = generate_logistic_data(n, 10, 7);
    GlmSpec s;
    s.family = GlmFamily::BernoulliLogit;
    s.x = to_device(d.x);
    s.y_int = d.y;
    s.beta = HostMatrix::Constant(10, 1, 0.1);
    s.need = GlmNeedGrad {true, true, false, false};
    for (auto _ : st) {
        benchmark::DoNotOptimize(glm_lpdf(s).lp);
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(BM_GemmDevice)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmEigen)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CholeskyDevice)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CholeskyEigen)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CholeskyGradient)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TriSolveDevice)->Arg(256)->Arg(600)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GlmLogistic)->Arg(1000)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
