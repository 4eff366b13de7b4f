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

#include "cowbif/nn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace cowbif::nn {

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& probs, const Tensor<T>& one_hot) {
  if (probs.rank() != 2) {
    throw ShapeError("cross_entropy expects (N, K) probabilities, got " + shape_to_string(probs.shape()));
  }
  require_shape(one_hot.shape(), probs.shape(), "cross_entropy target");
  const int n = probs.dim(0);
  LossResult<T> r{0.0, Tensor<T>(probs.shape())};
  if (n == 0) return r;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double t = one_hot[i];
    if (t == 0.0) continue;
    const double p = probs[i];
    total -= t * std::log(std::max(p, kProbabilityFloor));
    // The clamp is flat below the floor.
    r.grad[i] = p > kProbabilityFloor ? static_cast<T>(-t / (p * n)) : T{0};
  }
  r.value = total / n;
  return r;
}

template <typename T>
LossResult<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double smooth) {
  require_shape(target.shape(), pred.shape(), "dice_loss target");
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += static_cast<double>(pred[i]) * target[i];
    sp += pred[i];
    st += target[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = sp + st + smooth;
  LossResult<T> r{1.0 - num / den, Tensor<T>(pred.shape())};
  const double den2 = den * den;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r.grad[i] = static_cast<T>(-(2.0 * target[i] * den - num) / den2);
  }
  return r;
}

template LossResult<float> cross_entropy(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> cross_entropy(const Tensor<double>&, const Tensor<double>&);
template LossResult<float> dice_loss(const Tensor<float>&, const Tensor<float>&, double);
template LossResult<double> dice_loss(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace cowbif::nn
