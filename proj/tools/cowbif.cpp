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

// cowbif: phantom generation, training, cross-validation, detection and
// evaluation of Circle-of-Willis bifurcations.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cowbif/config.hpp"
#include "cowbif/error.hpp"
#include "cowbif/nifti.hpp"
#include "cowbif/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cowbif;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<int> jobs;
  std::optional<int> epochs;
  std::optional<std::string> out;
  std::string segmentation = "expert";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Root seed");
  cmd->add_option("--th", o.threshold, "Recognition distance threshold (voxels)");
  cmd->add_option("--jobs", o.jobs, "Parallel folds")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", o.out, "Output directory");
}

void add_segmentation(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--segmentation", o.segmentation, "Mask source")
      ->check(CLI::IsMember({"expert", "unet"}));
}

// Flags override the configuration file. --epochs applies to the network the
// subcommand trains.
PipelineConfig resolve(const CommonOptions& o, const std::string& command) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.threshold) c.threshold = *o.threshold;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.out) c.output_dir = *o.out;
  if (o.epochs) {
    if (command == "train-unet") {
      c.train_unet.epochs = *o.epochs;
    } else {
      c.train_classifier.epochs = *o.epochs;
    }
  }
  c.validate();
  return c;
}

void log_line(const std::string& s) { spdlog::info("{}", s); }

struct DetectOptions {
  std::optional<int> phantom_id;
  std::string image;
  std::string mask;
  std::string unet;
  std::string classifier;
  std::string name = "detect";
};

int run_detect(const CommonOptions& o, const DetectOptions& d) {
  const PipelineConfig cfg = resolve(o, "detect");
  const SegmentationMode mode = parse_segmentation_mode(o.segmentation);
  const fs::path out = fs::path(cfg.output_dir) / d.name;
  fs::create_directories(out);

  Volume3D image;
  std::optional<MaskVolume> expert;
  std::optional<phantom::GroundTruth> truth;
  std::string patient = d.name;
  if (d.phantom_id) {
    const fs::path manifest = manifest_path(cfg);
    const auto records = phantom::read_manifest(manifest);
    auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == *d.phantom_id; });
    if (it == records.end()) throw InvalidArgument("phantom " + std::to_string(*d.phantom_id) + " is not in " + manifest.string());
    PhantomData p = load_phantom(*it, manifest.has_parent_path() ? manifest.parent_path() : fs::path("."));
    image = std::move(p.image);
    expert = std::move(p.mask);
    truth = truth_on_grid(it->truth, image.spacing(), cfg.target_spacing);
    patient = "phantom_" + std::to_string(it->id);
  } else {
    if (d.image.empty()) throw InvalidArgument("detect needs --phantom or --image");
    image = read_volume(d.image);
    if (!d.mask.empty()) expert = read_mask(d.mask);
  }
  if (mode == SegmentationMode::kExpert && !expert) throw InvalidArgument("expert segmentation needs --mask or --phantom");

  const fs::path clf_path = !d.classifier.empty()                      ? fs::path(d.classifier)
                            : !cfg.paths.classifier_checkpoint.empty() ? fs::path(cfg.paths.classifier_checkpoint)
                                                                       : fs::path(cfg.output_dir) / "classifier.ckpt";
  const ClassifierEnsemble clf = load_classifiers(clf_path);
  LoadedModel unet;
  PatchPredictor segmenter;
  if (mode == SegmentationMode::kUNet) {
    const fs::path p = !d.unet.empty()                         ? fs::path(d.unet)
                       : !cfg.paths.unet_checkpoint.empty() ? fs::path(cfg.paths.unet_checkpoint)
                                                            : fs::path(cfg.output_dir) / "unet.ckpt";
    unet = load_model(p.string());
    segmenter = unet_predictor(*unet.model);
  }
  const Detection det = detect(image, mode == SegmentationMode::kExpert ? &*expert : nullptr,
                               mode == SegmentationMode::kUNet ? &segmenter : nullptr, clf.views(), cfg);

  const RecognitionReport report = patient_recognition(det.candidates, truth.value_or(phantom::GroundTruth{}), cfg.threshold);
  write_recognition_csv(out / "report.csv", {{patient, report}});
  write_nifti(out / "mask.nii.gz", det.mask);
  skel::write_graph(out / "graph.json", det.graph);

  nlohmann::json centers = nlohmann::json::object();
  for (const auto& c : report.classes) {
    nlohmann::json row;
    if (c.predicted) {
      row["center"] = {c.predicted->x, c.predicted->y, c.predicted->z};
      row["confidence"] = c.confidence;
    } else {
      row["center"] = nullptr;
    }
    centers[std::string(label_name(c.label))] = row;
  }
  std::ofstream(out / "centers.json") << centers.dump(2) << '\n';

  spdlog::info("{}: {} candidates, {}/{} bifurcations recognised at Th={}", patient, det.candidates.size(),
               report.hits, report.present, cfg.threshold);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circle-of-Willis bifurcation detection"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* gen = app.add_subcommand("phantom-gen", "Generate a phantom dataset and its manifest");
  add_common(gen, o);
  bool manifest_only = false;
  gen->add_flag("--manifest-only", manifest_only, "Write the manifest without volumes");

  auto* tu = app.add_subcommand("train-unet", "Train the segmentation network");
  add_common(tu, o);
  auto* tc = app.add_subcommand("train-clf", "Train the patch classifier");
  add_common(tc, o);
  auto* cv = app.add_subcommand("crossval", "Five-fold cross-validation of the classifier");
  add_common(cv, o);

  DetectOptions d;
  auto* det = app.add_subcommand("detect", "Detect and label bifurcations in one volume");
  add_common(det, o);
  add_segmentation(det, o);
  det->add_option("--phantom", d.phantom_id, "Phantom id from the configured manifest");
  det->add_option("--image", d.image, "Input volume (NIfTI)")->check(CLI::ExistingFile);
  det->add_option("--mask", d.mask, "Expert mask (NIfTI)")->check(CLI::ExistingFile);
  det->add_option("--unet", d.unet, "U-Net checkpoint");
  det->add_option("--clf", d.classifier, "Classifier checkpoint or directory of checkpoints");
  det->add_option("--name", d.name, "Output subdirectory");

  auto* ev = app.add_subcommand("eval", "Recognition on the held-out phantoms");
  add_common(ev, o);
  add_segmentation(ev, o);
  auto* sw = app.add_subcommand("sweep", "Recognition rate over distance thresholds");
  add_common(sw, o);
  add_segmentation(sw, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      run_phantom_gen(resolve(o, "phantom-gen"), !manifest_only, log_line);
    } else if (tu->parsed()) {
      run_train_unet(resolve(o, "train-unet"), log_line);
    } else if (tc->parsed()) {
      run_train_classifier(resolve(o, "train-clf"), log_line);
    } else if (cv->parsed()) {
      const CrossvalResult r = run_crossval(resolve(o, "crossval"), log_line);
      spdlog::info("pooled accuracy {:.4f}, macro F1 {:.4f}", r.pooled.accuracy.value_or(0.0), r.pooled.macro_f1.value_or(0.0));
    } else if (det->parsed()) {
      return run_detect(o, d);
    } else if (ev->parsed()) {
      const EvalResult r = run_eval(resolve(o, "eval"), parse_segmentation_mode(o.segmentation), log_line);
      spdlog::info("recognition rate {:.4f} ({}/{})", r.summary.rate().value_or(0.0), r.summary.total_hits,
                   r.summary.total_present);
    } else if (sw->parsed()) {
      run_sweep(resolve(o, "sweep"), parse_segmentation_mode(o.segmentation), log_line);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
