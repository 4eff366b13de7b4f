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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cowbif/labels.hpp"
#include "cowbif/volume.hpp"

namespace cowbif {

// One-vs-rest counts and rates for a single class. A rate whose denominator
// is zero is not available (nullopt), never 0.
struct ClassMetrics {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t support = 0;  // ground-truth count
  std::optional<double> tpr, fpr, precision, accuracy, f1;
};

struct ClassificationReport {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};  // [truth][prediction]
  std::array<ClassMetrics, kNumClasses> per_class{};
  std::int64_t total = 0;
  std::optional<double> accuracy;  // trace / total
  std::optional<double> macro_f1;  // over the 13 bifurcation classes with defined F1
};

ClassificationReport classification_metrics(std::span<const int> predictions, std::span<const int> labels);

// Area under the ROC curve of scores against binary labels, thresholds swept
// over every distinct score and integrated with the trapezoid rule (ties
// give diagonal steps). Not available without both classes.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

struct AucReport {
  std::array<std::optional<double>, kNumClasses> per_class{};
  std::optional<double> macro;  // mean over classes with a defined AUC
};

AucReport roc_auc(std::span<const std::array<double, kNumClasses>> scores, std::span<const int> labels);

struct SegmentationReport {
  double dsc = 0.0;
  std::optional<double> precision, recall;
  double hd95 = 0.0;  // voxels; +inf when exactly one mask is empty
};

// Surface voxels are mask voxels with at least one background 6-neighbour
// (outside the grid counts as background). HD95 is the larger of the two
// directed nearest-rank 95th percentiles of surface-to-surface distances.
SegmentationReport segmentation_metrics(const MaskVolume& pred, const MaskVolume& truth);

// Squared Euclidean distance (voxel units) from every voxel to the nearest
// non-zero voxel of `features`; +inf everywhere when there is none.
std::vector<double> squared_distance_transform(const MaskVolume& features);

std::vector<Index3> surface_voxels(const MaskVolume& mask);

void write_classification_csv(const std::string& path, const ClassificationReport& report,
                              const AucReport* auc = nullptr);

}  // namespace cowbif
