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
#include <filesystem>
#include <string>

#include "cowbif/dataset.hpp"
#include "cowbif/models.hpp"
#include "cowbif/phantom.hpp"
#include "cowbif/training.hpp"

namespace cowbif {

struct DatasetSection {
  std::string manifest = "dataset/manifest.jsonl";  // relative paths resolve against output_dir
  int count = 100;
  int test_count = 20;  // the last test_count phantoms are held out
};

struct PathsSection {
  std::string unet_checkpoint;
  std::string classifier_checkpoint;  // one file, or a directory of fold checkpoints
};

// Every tunable of the pipeline. JSON keys mirror the field names; unknown
// keys and type errors raise ConfigError with the dotted key path.
struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  double threshold = 16.0;
  int folds = 5;
  int jobs = 1;
  DatasetSection dataset;
  PathsSection paths;
  phantom::PhantomSpec phantom;
  ClassifierConfig classifier;
  UNetConfig unet;
  ClassifierTrainConfig train_classifier;
  UNetTrainConfig train_unet;
  AssemblyConfig assembly;
  SlidingWindow segmentation;
  int min_spur_length = 3;
  double target_spacing = 0.4;

  void validate() const;
};

PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string dump_config(const PipelineConfig& config);

}  // namespace cowbif
