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

#include "cowbif/nn/optim.hpp"

#include <cmath>

namespace cowbif::nn {

Fans compute_fans(const Shape& shape) {
  if (shape.size() == 2) return {shape[1], shape[0]};
  if (shape.size() >= 3) {
    int field = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) field *= shape[i];
    return {shape[1] * field, shape[0] * field};
  }
  throw ShapeError("cannot derive fan-in/fan-out from shape " + shape_to_string(shape));
}

template <typename T>
void xavier_uniform(Tensor<T>& tensor, std::mt19937_64& rng) {
  const Fans f = compute_fans(tensor.shape());
  const double limit = std::sqrt(6.0 / (f.fan_in + f.fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (T& v : tensor.values()) v = static_cast<T>(u(rng));
}

template <typename T>
Tensor<T> xavier_init(const Shape& shape, std::uint64_t seed) {
  Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  xavier_uniform(t, rng);
  return t;
}

template <typename T>
void initialize(Module<T>& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Module<T>* leaf : model.leaves()) {
    if (auto* conv = dynamic_cast<Conv3d<T>*>(leaf)) {
      xavier_uniform(conv->weight().value, rng);
      conv->bias().value.fill(T{0});
    } else if (auto* dense = dynamic_cast<Dense<T>*>(leaf)) {
      xavier_uniform(dense->weight().value, rng);
      dense->bias().value.fill(T{0});
    } else if (auto* bn = dynamic_cast<BatchNorm3d<T>*>(leaf)) {
      bn->gamma().value.fill(T{1});
      bn->beta().value.fill(T{0});
      bn->running_mean().fill(T{0});
      bn->running_var().fill(T{1});
    } else if (auto* drop = dynamic_cast<Dropout<T>*>(leaf)) {
      drop->reseed(rng());
    }
  }
  model.zero_grad();
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
  if (!(config.learning_rate > 0.0) || config.beta1 < 0.0 || config.beta1 >= 1.0 ||
      config.beta2 < 0.0 || config.beta2 >= 1.0 || !(config.epsilon > 0.0)) {
    throw InvalidArgument("adam needs lr > 0, beta1/beta2 in [0, 1) and epsilon > 0");
  }
}

template <typename T>
void Adam<T>::step(const std::vector<Param<T>*>& params) {
  if (m_.empty()) {
    for (const Param<T>* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("adam was set up for " + std::to_string(m_.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_shape(params[k]->grad.shape(), m_[k].shape(), "adam gradient '" + params[k]->name + "'");
    if (!params[k]->grad.all_finite()) {
      throw TrainingError("non-finite gradient in layer parameter '" + params[k]->name + "'");
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    Tensor<T>& m = m_[k];
    Tensor<T>& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = config_.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
      p.value[i] = static_cast<T>(p.value[i] - update);
    }
  }
}

template void xavier_uniform(Tensor<float>&, std::mt19937_64&);
template void xavier_uniform(Tensor<double>&, std::mt19937_64&);
template Tensor<float> xavier_init(const Shape&, std::uint64_t);
template Tensor<double> xavier_init(const Shape&, std::uint64_t);
template void initialize(Module<float>&, std::uint64_t);
template void initialize(Module<double>&, std::uint64_t);
template class Adam<float>;
template class Adam<double>;

}  // namespace cowbif::nn
