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

#include "cowbif/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "cowbif/nn/losses.hpp"
#include "cowbif/nn/optim.hpp"

namespace cowbif {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

bool ExperimentResult::meets(const ExperimentTargets& t) const {
  return patch_accuracy >= t.patch_accuracy && mean_dsc >= t.dsc && rate_unet >= t.rate_unet &&
         rate_expert >= t.rate_expert && hours <= t.budget_hours;
}

ExperimentResult run_experiment(const PipelineConfig& config, const Logger& log) {
  const auto t0 = Clock::now();
  ExperimentResult r;
  run_phantom_gen(config, true, log);
  run_train_unet(config, log);
  run_train_classifier(config, log);

  {
    const auto held_out = build_patch_set(config, true, log);
    const ClassifierEnsemble clf = load_classifiers(std::filesystem::path(config.output_dir) / "classifier.ckpt");
    r.patch_accuracy = evaluate_classifier(*clf.members.front().model, held_out).accuracy;
  }
  const EvalResult expert = run_eval(config, SegmentationMode::kExpert, log);
  r.rate_expert = expert.summary.rate().value_or(0.0);
  const EvalResult unet = run_eval(config, SegmentationMode::kUNet, log);
  r.rate_unet = unet.summary.rate().value_or(0.0);
  double dsc = 0.0;
  for (const auto& s : unet.segmentation) dsc += s.dsc;
  r.mean_dsc = unet.segmentation.empty() ? 0.0 : dsc / static_cast<double>(unet.segmentation.size());
  r.hours = seconds_since(t0) / 3600.0;
  return r;
}

double CostProjection::single_core_hours() const {
  return (unet_step_seconds * unet_steps + classifier_step_seconds * classifier_steps + inference_seconds) / 3600.0 *
         cores;
}

double CostProjection::hours_on(int cores_available) const {
  return single_core_hours() / std::max(1, cores_available);
}

namespace {

// Median wall time of one batch-1 forward/backward/Adam step.
template <typename Loss>
double time_step(nn::Module<float>& model, const nn::Shape& input_shape, Loss&& loss, int repeats,
                 double* forward_seconds) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  nn::Tensor<float> x(input_shape);
  for (float& v : x.values()) v = normal(rng);
  nn::Adam<float> adam(nn::AdamConfig{});
  std::vector<double> step, fwd;
  for (int i = 0; i < repeats; ++i) {
    auto t0 = Clock::now();
    model.zero_grad();
    const nn::Tensor<float> y = model.forward(x, nn::Mode::kTrain);
    fwd.push_back(seconds_since(t0));
    model.backward(loss(y));
    adam.step(model.parameters());
    step.push_back(seconds_since(t0));
  }
  std::sort(step.begin(), step.end());
  std::sort(fwd.begin(), fwd.end());
  if (forward_seconds != nullptr) *forward_seconds = fwd[fwd.size() / 2];
  return step[step.size() / 2];
}

}  // namespace

CostProjection project_experiment_cost(const PipelineConfig& config, double classifier_patches, int repeats) {
  CostProjection p;
  p.cores = 1;
  const int n_train = config.dataset.count - config.dataset.test_count;
  {
    auto unet = build_unet<float>(config.unet, 1);
    const int s = config.unet.input_size;
    double fwd = 0.0;
    p.unet_step_seconds = time_step(
        *unet, {1, 1, s, s, s},
        [](const nn::Tensor<float>& y) {
          nn::Tensor<float> target(y.shape(), 0.0f);
          for (std::size_t i = 0; i < target.size(); i += 2) target.data()[i] = 1.0f;
          return nn::dice_loss(y, target).grad;
        },
        repeats, &fwd);
    p.unet_steps = static_cast<double>(config.train_unet.epochs) * config.train_unet.patches_per_volume * n_train;
    const Dims3 d = config.phantom.dims;
    const auto windows = window_starts(d.nx, config.segmentation.window, config.segmentation.stride).size() *
                         window_starts(d.ny, config.segmentation.window, config.segmentation.stride).size() *
                         window_starts(d.nz, config.segmentation.window, config.segmentation.stride).size();
    p.inference_seconds = fwd * static_cast<double>(windows) * config.dataset.test_count;
  }
  {
    auto clf = build_classifier<float>(config.classifier, 1);
    const int s = config.classifier.input_size;
    p.classifier_step_seconds = time_step(
        *clf, {1, 1, s, s, s},
        [](const nn::Tensor<float>& y) {
          nn::Tensor<float> target(y.shape(), 0.0f);
          target.data()[0] = 1.0f;
          return nn::cross_entropy(y, target).grad;
        },
        repeats, nullptr);
    p.classifier_steps = static_cast<double>(config.train_classifier.epochs) * classifier_patches;
  }
  return p;
}

}  // namespace cowbif
