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

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cowbif/nn/layers.hpp"

namespace cowbif::nn {

struct Fans {
  int fan_in = 0;
  int fan_out = 0;
};

// (out, in) for dense weights; (Cout, Cin, k, k, k) for convolutions, where
// both fans include the receptive field k^3.
Fans compute_fans(const Shape& shape);

// Uniform on +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Tensor<T>& tensor, std::mt19937_64& rng);
template <typename T>
Tensor<T> xavier_init(const Shape& shape, std::uint64_t seed);

// Xavier weights and zero biases for every conv/dense layer, identity
// batch-norm affine, and per-layer dropout streams, all derived from seed.
template <typename T>
void initialize(Module<T>& model, std::uint64_t seed);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are kept per parameter in the order the
// parameters are passed on the first step.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  // Throws TrainingError naming the parameter on a non-finite gradient; no
  // parameter is modified in that case.
  void step(const std::vector<Param<T>*>& params);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace cowbif::nn
