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
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cowbif/nn/tensor.hpp"

namespace cowbif::nn {

enum class Mode { kTrain, kEval };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

// A differentiable layer or container. forward caches what backward needs;
// backward accumulates parameter gradients and returns the input gradient.
template <typename T>
class Module {
 public:
  explicit Module(std::string name) : name_(std::move(name)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string_view kind() const = 0;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad) = 0;

  virtual std::vector<Param<T>*> parameters() { return {}; }
  virtual std::vector<Buffer<T>> buffers() { return {}; }
  virtual std::vector<std::int64_t> hyperparameters() const { return {}; }

  // Leaf layers in execution order; containers recurse.
  virtual void collect_leaves(std::vector<Module*>& out) { out.push_back(this); }

  std::vector<Module*> leaves() {
    std::vector<Module*> out;
    collect_leaves(out);
    return out;
  }
  void zero_grad() {
    for (Param<T>* p : parameters()) p->grad.fill(T{0});
  }
  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Param<T>* p : parameters()) n += p->value.size();
    return n;
  }

 private:
  std::string name_;
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

template <typename T>
class Sequential : public Module<T> {
 public:
  explicit Sequential(std::string name) : Module<T>(std::move(name)) {}

  std::string_view kind() const override { return "sequential"; }
  Module<T>& add(ModulePtr<T> m) {
    layers_.push_back(std::move(m));
    return *layers_.back();
  }
  std::size_t size() const { return layers_.size(); }
  Module<T>& at(std::size_t i) { return *layers_.at(i); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  std::vector<Param<T>*> parameters() override;
  std::vector<Buffer<T>> buffers() override;
  void collect_leaves(std::vector<Module<T>*>& out) override {
    for (auto& l : layers_) l->collect_leaves(out);
  }

 private:
  std::vector<ModulePtr<T>> layers_;
};

// Cross-correlation over (N, C, D, H, W) with a cubic kernel.
template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

// weight: (Cout, Cin, k, k, k); bias: (Cout) or empty for no bias.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, int pad);
template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, int stride, int pad, bool with_bias);

template <typename T>
class Conv3d : public Module<T> {
 public:
  Conv3d(std::string name, int in_channels, int out_channels, int kernel, int stride = 1,
         int pad = -1);

  std::string_view kind() const override { return "conv3d"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  std::vector<Param<T>*> parameters() override { return {&weight_, &bias_}; }
  std::vector<std::int64_t> hyperparameters() const override {
    return {in_, out_, kernel_, stride_, pad_};
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

// Per-channel normalisation over (N, spatial). Running statistics follow
// r <- momentum * r + (1 - momentum) * batch_stat with the biased variance.
template <typename T>
class BatchNorm3d : public Module<T> {
 public:
  BatchNorm3d(std::string name, int channels, double eps = 1e-5, double momentum = 0.9);

  std::string_view kind() const override { return "batchnorm3d"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  std::vector<Param<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }
  std::vector<std::int64_t> hyperparameters() const override { return {channels_}; }

  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  int channels_;
  double eps_, momentum_;
  Param<T> gamma_;
  Param<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode last_mode_ = Mode::kEval;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  using Module<T>::Module;
  std::string_view kind() const override { return "relu"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid : public Module<T> {
 public:
  using Module<T>::Module;
  std::string_view kind() const override { return "sigmoid"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

 private:
  Tensor<T> output_;
};

// Softmax over axis 1 of an (N, K) tensor.
template <typename T>
class Softmax : public Module<T> {
 public:
  using Module<T>::Module;
  std::string_view kind() const override { return "softmax"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

 private:
  Tensor<T> output_;
};

// 2x2x2 window, stride 2. Odd spatial extents raise ShapeError.
template <typename T>
class MaxPool3d : public Module<T> {
 public:
  using Module<T>::Module;
  std::string_view kind() const override { return "maxpool3d"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

// Nearest-neighbour x2 along D, H and W.
template <typename T>
class Upsample3d : public Module<T> {
 public:
  using Module<T>::Module;
  std::string_view kind() const override { return "upsample3d"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
};

// (N, ...) -> (N, prod(...)).
template <typename T>
class Flatten : public Module<T> {
 public:
  using Module<T>::Module;
  std::string_view kind() const override { return "flatten"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

 private:
  Shape input_shape_;
};

// y = x W^T + b with W of shape (out, in).
template <typename T>
class Dense : public Module<T> {
 public:
  Dense(std::string name, int in_features, int out_features);

  std::string_view kind() const override { return "dense"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  std::vector<Param<T>*> parameters() override { return {&weight_, &bias_}; }
  std::vector<std::int64_t> hyperparameters() const override { return {in_, out_}; }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

// Inverted dropout: kept units are scaled by 1/(1 - rate) in training and
// the layer is the identity in evaluation.
template <typename T>
class Dropout : public Module<T> {
 public:
  Dropout(std::string name, double rate, std::uint64_t seed = 0);

  std::string_view kind() const override { return "dropout"; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  // Rate is stored in parts per million.
  std::vector<std::int64_t> hyperparameters() const override {
    return {static_cast<std::int64_t>(rate_ * 1e6 + 0.5)};
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  // Reuse the last mask on subsequent training forwards.
  void freeze_mask(bool frozen) { frozen_ = frozen; }
  double rate() const { return rate_; }

 private:
  double rate_;
  std::mt19937_64 rng_;
  std::vector<T> mask_;
  bool frozen_ = false;
  bool last_train_ = false;
};

}  // namespace cowbif::nn
