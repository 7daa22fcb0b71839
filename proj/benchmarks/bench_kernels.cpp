// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "eqreg/conv.hpp"
#include "eqreg/group.hpp"
#include "eqreg/trainer.hpp"

namespace {

using namespace eqreg;

Tensor4<float> random_tensor(Shape4 s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor4<float> t(s);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({8, c, 32, 32}, 1);
  ConvParams<float> p(random_tensor({c, c, 3, 3}, 2), std::vector<float>(c, 0.0f));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(32);

void BM_ConvBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({8, c, 32, 32}, 3);
  const auto g = random_tensor({8, c, 32, 32}, 4);
  ConvParams<float> p(random_tensor({c, c, 3, 3}, 5), std::vector<float>(c, 0.0f));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, p, g));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(32);

void BM_FeatureTransform(benchmark::State& state) {
  const RotationGroup group(static_cast<int>(state.range(0)));
  const auto t = static_cast<std::size_t>(group.order());
  const GroupFeature<float> f(random_tensor({8, 8 * t, 32, 32}, 6), t);
  for (auto _ : state) benchmark::DoNotOptimize(feature_transform(f, 1, group));
}
BENCHMARK(BM_FeatureTransform)->Arg(4)->Arg(8);

void BM_TrainStep(benchmark::State& state) {
  auto net = make_network<float>(Architecture{});
  init_weights(net, 7);
  Adam<float> opt;
  EqRegConfig cfg;
  cfg.lambda = static_cast<double>(state.range(0)) / 10.0;
  std::mt19937_64 rng(8);
  const auto x = random_tensor({8, 1, 32, 32}, 9);
  const auto y = random_tensor({8, 1, 32, 32}, 10);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(net, opt, x, y, cfg, rng));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
