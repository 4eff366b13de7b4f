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
#include <optional>
#include <string>

#include "cowbif/config.hpp"
#include "cowbif/pipeline.hpp"

namespace cowbif {

struct ExperimentTargets {
  double patch_accuracy = 0.90;
  double dsc = 0.90;
  double rate_unet = 0.85;
  double rate_expert = 0.90;
  double budget_hours = 4.0;
};

struct ExperimentResult {
  double patch_accuracy = 0.0;  // held-out phantoms, expert-mask candidates
  double mean_dsc = 0.0;
  double rate_unet = 0.0;
  double rate_expert = 0.0;
  double hours = 0.0;

  bool meets(const ExperimentTargets& t) const;
};

// phantom-gen, train-unet, train-clf, held-out patch accuracy, eval in both
// segmentation modes. Everything is written under config.output_dir.
ExperimentResult run_experiment(const PipelineConfig& config, const Logger& log);

struct CostProjection {
  double unet_step_seconds = 0.0;        // one 64^3 patch, forward + backward + update
  double classifier_step_seconds = 0.0;  // one 32^3 patch
  double unet_steps = 0.0;               // patches over the whole schedule
  double classifier_steps = 0.0;
  double inference_seconds = 0.0;        // sliding-window U-Net over the test set
  int cores = 1;

  double single_core_hours() const;
  // Ideal linear scaling onto `cores_available` cores.
  double hours_on(int cores_available) const;
};

// Times batch-1 training steps of both networks at the configured sizes and
// scales them to the full schedule of config. classifier_patches is the
// expected patch count per classifier epoch.
CostProjection project_experiment_cost(const PipelineConfig& config, double classifier_patches,
                                       int repeats = 2);

}  // namespace cowbif
