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
#include <string>
#include <vector>

#include "cowbif/nn/layers.hpp"

namespace cowbif {

// Patch classifier: conv blocks of (conv 3^3 + batch norm + ReLU) x n followed
// by a 2^3 max-pool, then dense(hidden) + ReLU + dropout + dense(classes) +
// softmax.
struct ClassifierConfig {
  int input_size = 32;
  std::vector<int> widths{32, 64, 128, 256, 512};
  std::vector<int> convs_per_block{2, 2, 2, 2, 1};
  int hidden = 512;
  double dropout = 0.6;
  int classes = 14;

  void validate() const;
};

// 3D U-Net with `levels` resolution levels, widths base_width * 2^level,
// two conv + batch norm + ReLU per level, 2^3 max-pool (stride 2) between
// levels, nearest x2 upsampling with skip concatenation and a 1^3 conv +
// sigmoid head.
struct UNetConfig {
  int input_size = 64;
  int base_width = 32;
  int levels = 4;

  void validate() const;
};

template <typename T>
class UNet : public nn::Module<T> {
 public:
  UNet(std::string name, const UNetConfig& config);

  std::string_view kind() const override { return "unet"; }
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) override;
  nn::Tensor<T> backward(const nn::Tensor<T>& grad) override;
  std::vector<nn::Param<T>*> parameters() override;
  std::vector<nn::Buffer<T>> buffers() override;
  void collect_leaves(std::vector<nn::Module<T>*>& out) override;

  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  std::vector<std::unique_ptr<nn::Sequential<T>>> encoder_;
  std::vector<std::unique_ptr<nn::MaxPool3d<T>>> pools_;
  std::vector<std::unique_ptr<nn::Upsample3d<T>>> ups_;
  std::vector<std::unique_ptr<nn::Sequential<T>>> decoder_;
  std::unique_ptr<nn::Conv3d<T>> head_;
  std::unique_ptr<nn::Sigmoid<T>> sigmoid_;
  std::vector<int> skip_channels_;
};

// Builders return Xavier-initialised models.
template <typename T = float>
std::unique_ptr<nn::Sequential<T>> build_classifier(const ClassifierConfig& config, std::uint64_t seed);
template <typename T = float>
std::unique_ptr<UNet<T>> build_unet(const UNetConfig& config, std::uint64_t seed);

std::string architecture_json(const ClassifierConfig& config);
std::string architecture_json(const UNetConfig& config);

// Reconstructs a model from a checkpoint's architecture text, then loads the
// stored tensors.
struct LoadedModel {
  std::unique_ptr<nn::Module<float>> model;
  std::string type;  // "classifier" or "unet"
  int input_size = 0;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
};
LoadedModel load_model(const std::string& checkpoint_path);

}  // namespace cowbif
