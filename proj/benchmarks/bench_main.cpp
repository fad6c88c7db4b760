#include <benchmark/benchmark.h>

#include <random>

#include "metasci/autodiff.hpp"
#include "metasci/dataset.hpp"
#include "metasci/fast_adaptation.hpp"
#include "metasci/gap_tv.hpp"
#include "metasci/metrics.hpp"

namespace {

using namespace metasci;

template <class T>
Tensor<T> noise(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(u(rng));
  return t;
}

// 3x3 same-padded convolution, C -> C channels on a 64x64 map.
void BM_Conv2d(benchmark::State& state) {
  const std::size_t c = state.range(0), stride = state.range(1);
  const auto x = noise<float>({64, 64, c}, 1);
  const auto w = noise<float>({3, 3, c, c}, 2);
  const Tensor<float> b({c});
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d(x, w, b, stride));
  state.SetItemsProcessed(state.iterations() * 64 * 64 / (stride * stride) * 9 * c * c);
}
BENCHMARK(BM_Conv2d)->Args({16, 1})->Args({32, 1})->Args({64, 1})->Args({64, 2});

void BM_ConvBackward(benchmark::State& state) {
  const std::size_t c = state.range(0);
  const auto x = noise<float>({1, 32, 32, c}, 1);
  const auto w = noise<float>({3, 3, c, c}, 2);
  for (auto _ : state) {
    ad::Tape<float> t;
    const auto wv = t.variable(w);
    const auto loss = ad::sum(ad::conv2d(t.constant(x), wv, t.constant(Tensor<float>({c})), 1));
    const std::vector<ad::Var<float>> params{wv};
    benchmark::DoNotOptimize(t.gradients(loss, params));
  }
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(64);

void BM_Encode(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const MaskSet m = generate_masks(8, n, n, 0.5, 1);
  const VideoBlock v(noise<double>({8, n, n}, 2));
  for (auto _ : state) benchmark::DoNotOptimize(encode(v, m));
  state.SetBytesProcessed(state.iterations() * 8 * n * n * sizeof(double));
}
BENCHMARK(BM_Encode)->Arg(64)->Arg(256);

// End-to-end reconstruction latency for one 256x256x8 measurement.
void BM_Reconstruct256(benchmark::State& state) {
  const ArchConfig arch{8, state.range(0) / 4.0, 3, 0.2};
  const auto [base, meta] = init_params<float>(arch, 1);
  const MaskSet m = generate_masks(8, 256, 256, 0.5, 2);
  const Measurement y = encode(moving_shapes(8, 256, 256, 3), m);
  const TaskModulation<float> mod = unbound(meta);
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct(y, m, base, mod));
  state.SetLabel("width_scale=" + std::to_string(arch.width_scale).substr(0, 4));
}
BENCHMARK(BM_Reconstruct256)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->Iterations(2);

// One adaptation epoch on a 64x64, B=4 task with a quarter-width backbone.
void BM_AdaptEpoch(benchmark::State& state) {
  const ArchConfig arch{4, 0.25, 3, 0.2};
  const auto [base, meta] = init_params<float>(arch, 1);
  const TaskDataset task = make_synthetic_task("bench", generate_masks(4, 64, 64, 0.5, 2), 8, 3);
  AdaptConfig cfg;
  cfg.epochs = 1;
  cfg.record_timing = false;
  for (auto _ : state) benchmark::DoNotOptimize(adapt_task(base, meta, task, cfg));
}
BENCHMARK(BM_AdaptEpoch)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_GapTvIteration(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const MaskSet m = generate_masks(8, n, n, 0.5, 1);
  const Measurement y = encode(moving_shapes(8, n, n, 2), m);
  GapTvConfig cfg;
  cfg.iterations = 1;
  for (auto _ : state) benchmark::DoNotOptimize(gap_tv_reconstruct(y, m, cfg));
}
BENCHMARK(BM_GapTvIteration)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const Image a = noise<double>({n, n}, 1), b = noise<double>({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
