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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cowbif/dataset.hpp"
#include "cowbif/nn/layers.hpp"
#include "cowbif/nn/optim.hpp"
#include "cowbif/volume.hpp"

namespace cowbif {

struct ClassifierTrainConfig {
  int epochs = 250;
  int batch_size = 32;
  nn::AdamConfig adam{};
  bool augment = true;
  std::uint64_t seed = 0;
};

struct UNetTrainConfig {
  int epochs = 20;
  int batch_size = 8;
  int patches_per_volume = 100;
  double on_mask_fraction = 0.7;
  int probe_patches = 16;  // fixed evaluation set for the per-epoch probe loss
  nn::AdamConfig adam{};
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;  // 0 = before the first update
  int fold = 0;
  std::string split;  // "train", "val" or "probe"
  double loss = 0.0;
  std::optional<double> accuracy;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

using ClassProbabilities = std::array<double, kNumClasses>;

// Eval-mode loss and accuracy over a patch set.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<int> labels;
  std::vector<ClassProbabilities> probabilities;
};
Evaluation evaluate_classifier(nn::Module<float>& model, const std::vector<LabeledPatch>& patches,
                               int batch_size = 32);

// Epoch 0 rows hold the eval-mode loss of the untouched model; later train
// rows average the training-mode batch losses of that epoch.
std::vector<EpochRecord> train_classifier(nn::Module<float>& model, const std::vector<LabeledPatch>& train,
                                          const std::vector<LabeledPatch>& val,
                                          const ClassifierTrainConfig& config, int fold = 0,
                                          const EpochCallback& on_epoch = {});

// Eval-mode class probabilities of one 32^3 patch; normalises the patch.
ClassProbabilities predict_patch(nn::Module<float>& model, const Patch& patch, int input_size = 32);
// Averaged over an ensemble, batched.
std::vector<ClassProbabilities> predict_patches(const std::vector<nn::Module<float>*>& models,
                                                const std::vector<Patch>& patches, int input_size = 32,
                                                int batch_size = 32);

// ----------------------------------------------------------------- U-Net

struct SegmentationSample {
  const Volume3D* image = nullptr;
  const MaskVolume* mask = nullptr;
};

// Exactly round(count * on_fraction) centres on mask voxels, the rest off.
std::vector<Index3> sample_unet_centers(const MaskVolume& mask, int count, double on_fraction,
                                        std::mt19937_64& rng);

std::vector<EpochRecord> train_unet(nn::Module<float>& model, const std::vector<SegmentationSample>& data,
                                    const UNetTrainConfig& config, int input_size = 64,
                                    const EpochCallback& on_epoch = {});

struct SlidingWindow {
  int window = 64;
  int stride = 32;
  double threshold = 0.5;
};

// Maps a z-scored window^3 patch (x-fastest) to window^3 probabilities.
using PatchPredictor = std::function<std::vector<float>(const std::vector<float>& patch, int window)>;
PatchPredictor unet_predictor(nn::Module<float>& model);

// Window origins along one axis: 0, stride, ... with the last window flush
// with the end; a single origin 0 when the axis is shorter than the window.
std::vector<int> window_starts(int extent, int window, int stride);

struct SegmentationTrace {
  Volume3D probability;              // mean of the overlapping window outputs
  std::vector<std::uint16_t> coverage;  // windows covering each voxel
};

// Sliding-window inference with per-window z-scoring, mean aggregation and
// thresholding at config.threshold. Windows that run past the volume are
// zero-padded and cropped back.
MaskVolume segment_volume(const Volume3D& volume, const PatchPredictor& predictor,
                          const SlidingWindow& config = {}, SegmentationTrace* trace = nullptr);

}  // namespace cowbif
