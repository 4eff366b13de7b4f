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

#include "cowbif/nn/tensor.hpp"

namespace cowbif::nn {

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // d(value)/d(prediction)
};

inline constexpr double kProbabilityFloor = 1e-12;

// -mean over the batch of log p_true, probabilities clamped at 1e-12.
// probs and one_hot are (N, K).
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& probs, const Tensor<T>& one_hot);

// 1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s) over the whole tensor.
template <typename T>
LossResult<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double smooth = 1.0);

}  // namespace cowbif::nn
