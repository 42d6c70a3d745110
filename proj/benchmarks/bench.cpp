#include <benchmark/benchmark.h>

#include "vofm/dataset.hpp"
#include "vofm/train.hpp"

using namespace vofm;

static void BM_ZernikeRender(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(zernike::render_basis(11, m));
}
BENCHMARK(BM_ZernikeRender)->Arg(64)->Arg(256);

static void BM_ForwardOpd(benchmark::State& state) {
  optics::ForwardConfig cfg = optics::default_config("asphere", 64);
  SurfaceGrid topo = optics::design_topography("asphere", 64);
  for (auto _ : state)
    benchmark::DoNotOptimize(optics::forward_opd(topo, cfg));
}
BENCHMARK(BM_ForwardOpd);

static void BM_Conv2dForward(benchmark::State& state) {
  net::Tensor<float> x(8, 16, 64, 64), w(16, 16, 3, 3);
  Rng rng(1);
  for (auto& v : x.v) v = static_cast<float>(rng.normal());
  for (auto& v : w.v) v = static_cast<float>(rng.normal());
  std::vector<float> b(16, 0.0f);
  for (auto _ : state)
    benchmark::DoNotOptimize(net::conv2d_forward(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv2dForward);

static void BM_Conv2dBackward(benchmark::State& state) {
  net::Tensor<float> x(8, 16, 64, 64), w(16, 16, 3, 3), dy(8, 16, 64, 64);
  Rng rng(1);
  for (auto& v : x.v) v = static_cast<float>(rng.normal());
  for (auto& v : w.v) v = static_cast<float>(rng.normal());
  for (auto& v : dy.v) v = static_cast<float>(rng.normal());
  for (auto _ : state)
    benchmark::DoNotOptimize(net::conv2d_backward(x, w, dy, 1, 1));
}
BENCHMARK(BM_Conv2dBackward);

static void BM_UNetForward(benchmark::State& state) {
  net::UNetConfig cfg;
  cfg.depth = 3;
  cfg.base_width = 16;
  cfg.in_channels = 1;
  net::UNet<float> net = net::UNet<float>::build(cfg, 1);
  net::Tensor<float> x(1, 1, 64, 64);
  Rng rng(2);
  for (auto& v : x.v) v = static_cast<float>(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_UNetForward);

BENCHMARK_MAIN();
