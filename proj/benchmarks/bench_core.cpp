/*
 * Copyright 2026 The cowbif Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <benchmark/benchmark.h>

#include <random>

#include "cowbif/graph.hpp"
#include "cowbif/models.hpp"
#include "cowbif/nn/layers.hpp"
#include "cowbif/nn/losses.hpp"
#include "cowbif/nn/optim.hpp"
#include "cowbif/phantom.hpp"
#include "cowbif/skeleton.hpp"
#include "cowbif/volume.hpp"

namespace {

using namespace cowbif;

nn::Tensor<float> random_tensor(const nn::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  nn::Tensor<float> t(shape);
  for (float& v : t.values()) v = g(rng);
  return t;
}

const phantom::PhantomCase& default_phantom() {
  static const phantom::PhantomCase c = [] {
    phantom::PhantomSpec spec;
    spec.seed = 2024;
    return phantom::generate_phantom(spec);
  }();
  return c;
}

// Arguments: channels in, channels out, spatial extent.
void BM_Conv3dForward(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  nn::Conv3d<float> conv("conv", cin, cout, 3);
  nn::initialize(conv, 1);
  const auto x = random_tensor({1, cin, s, s, s}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nn::Mode::kEval));
  state.counters["GMAC/s"] = benchmark::Counter(27.0 * cin * cout * s * s * s * 1e-9,
                                                benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3dForward)->Args({1, 32, 32})->Args({32, 32, 32})->Args({64, 64, 16})->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int s = static_cast<int>(state.range(2));
  nn::Conv3d<float> conv("conv", cin, cout, 3);
  nn::initialize(conv, 1);
  const auto x = random_tensor({1, cin, s, s, s}, 2);
  const auto g = random_tensor({1, cout, s, s, s}, 3);
  conv.forward(x, nn::Mode::kTrain);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(g));
}
BENCHMARK(BM_Conv3dBackward)->Args({32, 32, 32})->Unit(benchmark::kMillisecond);

void BM_ClassifierStep(benchmark::State& state) {
  auto model = build_classifier<float>(ClassifierConfig{}, 1);
  nn::Adam<float> adam;
  const auto x = random_tensor({1, 1, 32, 32, 32}, 4);
  nn::Tensor<float> target({1, kNumClasses}, 0.0f);
  target[0] = 1.0f;
  for (auto _ : state) {
    model->zero_grad();
    const auto y = model->forward(x, nn::Mode::kTrain);
    model->backward(nn::cross_entropy(y, target).grad);
    adam.step(model->parameters());
  }
}
BENCHMARK(BM_ClassifierStep)->Unit(benchmark::kMillisecond);

void BM_Skeletonize(benchmark::State& state) {
  const MaskVolume& mask = default_phantom().mask;
  for (auto _ : state) benchmark::DoNotOptimize(skel::skeletonize(mask));
}
BENCHMARK(BM_Skeletonize)->Unit(benchmark::kMillisecond);

void BM_BuildGraph(benchmark::State& state) {
  const skel::Skeleton sk = skel::skeletonize(default_phantom().mask);
  for (auto _ : state) benchmark::DoNotOptimize(skel::prune_spurs(skel::build_graph(sk)));
}
BENCHMARK(BM_BuildGraph)->Unit(benchmark::kMillisecond);

void BM_GeneratePhantom(benchmark::State& state) {
  phantom::PhantomSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(phantom::generate_phantom(spec));
    ++spec.seed;
  }
}
BENCHMARK(BM_GeneratePhantom)->Unit(benchmark::kMillisecond);

void BM_ResampleTrilinear(benchmark::State& state) {
  const Volume3D& image = default_phantom().image;
  for (auto _ : state) benchmark::DoNotOptimize(resample(image, {0.5, 0.5, 0.5}, Interpolation::kTrilinear));
}
BENCHMARK(BM_ResampleTrilinear)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
