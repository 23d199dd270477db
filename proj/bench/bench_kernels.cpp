// Serial reference vs OpenMP kernels at the sizes the denoiser uses
// (B = 75 frames, 150 tokens in the second stack, width 512, ff 2048).
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mstitch/kernels.hpp"

using namespace mstitch;
namespace k = mstitch::kernels;

namespace {

std::vector<Real> filled(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> dist;
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(dist(gen));
  return v;
}

using MatmulFn = void (*)(const Real*, const Real*, Real*, std::size_t, std::size_t, std::size_t, bool);

void run_matmul(benchmark::State& state, MatmulFn fn) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * kk, 1), b = filled(kk * n, 2);
  std::vector<Real> c(m * n);
  for (auto _ : state) {
    fn(a.data(), b.data(), c.data(), m, kk, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * double(m * kk * n), benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void BM_matmul_serial(benchmark::State& s) { run_matmul(s, k::serial::matmul); }
void BM_matmul_parallel(benchmark::State& s) { run_matmul(s, k::parallel::matmul); }
void BM_matmul_tn_serial(benchmark::State& s) { run_matmul(s, k::serial::matmul_tn); }
void BM_matmul_tn_parallel(benchmark::State& s) { run_matmul(s, k::parallel::matmul_tn); }

void matmul_sizes(benchmark::internal::Benchmark* b) {
  b->Args({150, 512, 1536})->Args({150, 512, 2048})->Args({150, 2048, 512})->Args({75, 45, 512});
  b->Unit(benchmark::kMicrosecond);
}

void run_attention(benchmark::State& state, bool parallel, bool backward) {
  k::AttentionDims dims{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(0)),
                        static_cast<std::size_t>(state.range(1)), 8};
  const auto q = filled(dims.queries * dims.width, 3), kk = filled(dims.keys * dims.width, 4),
             v = filled(dims.keys * dims.width, 5), dout = filled(dims.queries * dims.width, 6);
  std::vector<Real> out(dims.queries * dims.width), probs(dims.heads * dims.queries * dims.keys);
  std::vector<Real> dq(q.size()), dk(kk.size()), dv(v.size());
  auto fwd = parallel ? k::parallel::attention_forward : k::serial::attention_forward;
  auto bwd = parallel ? k::parallel::attention_backward : k::serial::attention_backward;
  fwd(q.data(), kk.data(), v.data(), out.data(), probs.data(), dims);
  for (auto _ : state) {
    if (backward) {
      bwd(q.data(), kk.data(), v.data(), probs.data(), dout.data(), dq.data(), dk.data(), dv.data(), dims);
      benchmark::DoNotOptimize(dq.data());
    } else {
      fwd(q.data(), kk.data(), v.data(), out.data(), probs.data(), dims);
      benchmark::DoNotOptimize(out.data());
    }
  }
}

void BM_attention_forward_serial(benchmark::State& s) { run_attention(s, false, false); }
void BM_attention_forward_parallel(benchmark::State& s) { run_attention(s, true, false); }
void BM_attention_backward_serial(benchmark::State& s) { run_attention(s, false, true); }
void BM_attention_backward_parallel(benchmark::State& s) { run_attention(s, true, true); }

void attention_sizes(benchmark::internal::Benchmark* b) {
  b->Args({75, 512})->Args({150, 512})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_matmul_serial)->Apply(matmul_sizes);
BENCHMARK(BM_matmul_parallel)->Apply(matmul_sizes);
BENCHMARK(BM_matmul_tn_serial)->Apply(matmul_sizes);
BENCHMARK(BM_matmul_tn_parallel)->Apply(matmul_sizes);
BENCHMARK(BM_attention_forward_serial)->Apply(attention_sizes);
BENCHMARK(BM_attention_forward_parallel)->Apply(attention_sizes);
BENCHMARK(BM_attention_backward_serial)->Apply(attention_sizes);
BENCHMARK(BM_attention_backward_parallel)->Apply(attention_sizes);

BENCHMARK_MAIN();
