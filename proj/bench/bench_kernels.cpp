// Serial reference kernels against the OpenMP/GEMM path, at the network's
// working shapes (3x3 convs over `width` channels on an h x h image).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sinddm/kernels.hpp"

namespace k = sinddm::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> d(0.f, 0.5f);
  std::vector<float> v(n);
  for (float& x : v) x = d(gen);
  return v;
}

k::ConvGeometry geometry(const benchmark::State& st) {
  k::ConvGeometry g;
  g.in_h = g.in_w = static_cast<int>(st.range(0));
  g.in_c = g.out_c = static_cast<int>(st.range(1));
  return g;
}

void set_flops(benchmark::State& st, const k::ConvGeometry& g, double passes) {
  const double flops = 2.0 * g.out_h() * g.out_w() * g.patch_size() * g.out_c * passes;
  st.counters["GFLOP/s"] = benchmark::Counter(flops, benchmark::Counter::kIsIterationInvariantRate,
                                              benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& st) {
  const k::ConvGeometry g = geometry(st);
  const auto in = random_vec(g.in_size(), 1), w = random_vec(g.weight_size(), 2), b = random_vec(g.out_c, 3);
  std::vector<float> out(g.out_size());
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv2d_forward<float>(g, in, w, b, out);
    else
      k::reference::conv2d_forward<float>(g, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  set_flops(st, g, 1);
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& st) {
  const k::ConvGeometry g = geometry(st);
  const auto in = random_vec(g.in_size(), 1), w = random_vec(g.weight_size(), 2), dout = random_vec(g.out_size(), 4);
  std::vector<float> din(g.in_size()), dw(g.weight_size()), db(g.out_c);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv2d_backward<float>(g, in, w, dout, din, dw, db);
    else
      k::reference::conv2d_backward<float>(g, in, w, dout, din, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
  set_flops(st, g, 2);
}

template <bool Parallel>
void BM_gelu(benchmark::State& st) {
  const auto in = random_vec(static_cast<std::size_t>(st.range(0)), 5);
  std::vector<float> out(in.size()), din(in.size());
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::parallel::gelu_forward<float>(in, out);
      k::parallel::gelu_backward<float>(in, in, din);
    } else {
      k::reference::gelu_forward<float>(in, out);
      k::reference::gelu_backward<float>(in, in, din);
    }
    benchmark::DoNotOptimize(din.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void conv_args(benchmark::internal::Benchmark* b) {
  for (int side : {32, 64})
    for (int width : {16, 64}) b->Args({side, width});
  b->Args({128, 64})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gelu<false>)->Name("gelu/reference")->Arg(1 << 18);
BENCHMARK(BM_gelu<true>)->Name("gelu/parallel")->Arg(1 << 18);

BENCHMARK_MAIN();
