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

#include "cowbif/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <map>

#include "cowbif/nifti.hpp"
#include "cowbif/nn/checkpoint.hpp"
#include "cowbif/skeleton.hpp"
#include "json.hpp"

namespace cowbif {

namespace fs = std::filesystem;

SegmentationMode parse_segmentation_mode(const std::string& name) {
  if (name == "expert") return SegmentationMode::kExpert;
  if (name == "unet") return SegmentationMode::kUNet;
  throw InvalidArgument("segmentation mode must be 'expert' or 'unet', got '" + name + "'");
}

std::string to_string(SegmentationMode mode) { return mode == SegmentationMode::kExpert ? "expert" : "unet"; }

std::uint64_t component_seed(std::uint64_t root, const std::string& component) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return phantom::derive_seed(root, h);
}

skel::VesselGraph extract_graph(const MaskVolume& mask, int min_spur_length) {
  return skel::prune_spurs(skel::build_graph(skel::skeletonize(mask)), min_spur_length);
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(std::string("stage '") + name + "' failed: " + e.what());
  }
}

Spacing3 isotropic(double s) { return {s, s, s}; }

}  // namespace

Detection detect(const Volume3D& volume, const MaskVolume* expert_mask, const PatchPredictor* segmenter,
                 const std::vector<nn::Module<float>*>& classifiers, const PipelineConfig& config) {
  if (expert_mask == nullptr && segmenter == nullptr) {
    throw InvalidArgument("detect needs an expert mask or a segmentation model");
  }
  const Spacing3 target = isotropic(config.target_spacing);
  const Volume3D image = stage("resample", [&] { return resample(volume, target, Interpolation::kTrilinear); });
  Detection d;
  d.mask = stage("segment", [&] {
    if (expert_mask != nullptr) return resample(*expert_mask, target, Interpolation::kNearest);
    return segment_volume(image, *segmenter, config.segmentation);
  });
  d.graph = stage("skeleton_graph", [&] { return extract_graph(d.mask, config.min_spur_length); });
  stage("classify", [&] {
    const std::vector<Index3> centers = skel::candidate_centers(d.graph);
    if (centers.empty()) return 0;
    std::vector<Patch> patches;
    patches.reserve(centers.size());
    for (const Index3& c : centers) patches.push_back(crop_patch(image, c, config.classifier.input_size));
    const auto probs = predict_patches(classifiers, patches, config.classifier.input_size);
    for (std::size_t i = 0; i < centers.size(); ++i) d.candidates.push_back({centers[i], probs[i]});
    return 0;
  });
  return d;
}

std::vector<nn::Module<float>*> ClassifierEnsemble::views() const {
  std::vector<nn::Module<float>*> v;
  for (const auto& m : members) v.push_back(m.model.get());
  return v;
}

int ClassifierEnsemble::input_size() const { return members.empty() ? 0 : members.front().input_size; }

ClassifierEnsemble load_classifiers(const fs::path& path) {
  ClassifierEnsemble e;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw InvalidArgument("no classifier checkpoints found at '" + path.string() + "'");
  for (const auto& f : files) {
    LoadedModel m = load_model(f.string());
    if (m.type != "classifier") throw InvalidArgument("'" + f.string() + "' is not a classifier checkpoint");
    if (!e.members.empty() && m.input_size != e.input_size()) {
      throw InvalidArgument("classifier checkpoints disagree on the input size");
    }
    e.members.push_back(std::move(m));
  }
  return e;
}

PhantomData load_phantom(const phantom::PhantomRecord& record, const fs::path& manifest_dir) {
  PhantomData d{record, {}, {}};
  const fs::path image = manifest_dir / record.image_file;
  const fs::path mask = manifest_dir / record.mask_file;
  if (!record.image_file.empty() && !record.mask_file.empty() && fs::exists(image) && fs::exists(mask)) {
    d.image = read_volume(image);
    d.mask = read_mask(mask);
  } else {
    phantom::PhantomCase c = phantom::render(record);
    d.image = std::move(c.image);
    d.mask = std::move(c.mask);
  }
  return d;
}

std::pair<std::vector<phantom::PhantomRecord>, std::vector<phantom::PhantomRecord>> split_train_test(
    const std::vector<phantom::PhantomRecord>& records, int test_count) {
  if (test_count < 0 || static_cast<std::size_t>(test_count) >= records.size()) {
    throw InvalidArgument("test split of " + std::to_string(test_count) + " leaves no training phantoms out of " +
                          std::to_string(records.size()));
  }
  const auto cut = records.end() - test_count;
  return {{records.begin(), cut}, {cut, records.end()}};
}

namespace {

struct Workspace {
  fs::path out;
  fs::path manifest;
  std::vector<phantom::PhantomRecord> train;
  std::vector<phantom::PhantomRecord> test;
};

Workspace open_workspace(const PipelineConfig& config) {
  Workspace w;
  w.out = config.output_dir;
  fs::create_directories(w.out);
  w.manifest = manifest_path(config);
  const auto records = phantom::read_manifest(w.manifest);
  std::tie(w.train, w.test) = split_train_test(records, config.dataset.test_count);
  return w;
}

fs::path manifest_dir(const Workspace& w) {
  return w.manifest.has_parent_path() ? w.manifest.parent_path() : fs::path(".");
}

std::string patient_id(const phantom::PhantomRecord& r) { return "phantom_" + std::to_string(r.id); }

PipelineConfig seeded(PipelineConfig c) {
  c.train_unet.seed = component_seed(c.seed, "train_unet");
  c.train_classifier.seed = component_seed(c.seed, "train_classifier");
  c.assembly.seed = component_seed(c.seed, "assembly");
  return c;
}

// Classifier patches of the given patients, from their expert masks.
std::vector<PatientPatches> collect_patches(const Workspace& w, const std::vector<phantom::PhantomRecord>& records,
                                            const PipelineConfig& config, const Logger& log) {
  std::vector<PatientPatches> out;
  for (const auto& r : records) {
    const PhantomData d = load_phantom(r, manifest_dir(w));
    const skel::VesselGraph g = extract_graph(d.mask, config.min_spur_length);
    const PatientInput in{patient_id(r), &d.image, &r.truth, &g};
    out.push_back(collect_patient_patches(in, config.assembly));
    if (log) {
      log(patient_id(r) + ": " + std::to_string(out.back().boi.size()) + " bifurcation patches, " +
          std::to_string(out.back().boni_candidates.size()) + " background candidates");
    }
  }
  return out;
}

EpochCallback epoch_logger(const Logger& log, const std::string& what) {
  if (!log) return {};
  return [log, what](const EpochRecord& r) {
    std::string line = what + " fold " + std::to_string(r.fold) + " epoch " + std::to_string(r.epoch) + " " +
                       r.split + " loss " + std::to_string(r.loss);
    if (r.accuracy) line += " acc " + std::to_string(*r.accuracy);
    log(line);
  };
}

}  // namespace

fs::path manifest_path(const PipelineConfig& config) {
  fs::path m = config.dataset.manifest;
  return m.is_relative() ? fs::path(config.output_dir) / m : m;
}

std::vector<LabeledPatch> build_patch_set(const PipelineConfig& raw, bool held_out, const Logger& log) {
  const PipelineConfig config = seeded(raw);
  const Workspace w = open_workspace(config);
  return finalize_patch_dataset(collect_patches(w, held_out ? w.test : w.train, config, log), config.assembly);
}

void run_phantom_gen(const PipelineConfig& config, bool write_volumes, const Logger& log) {
  const fs::path manifest = manifest_path(config);
  const fs::path dir = manifest.has_parent_path() ? manifest.parent_path() : fs::path(config.output_dir);
  fs::create_directories(dir);
  auto records = phantom::sample_manifest(config.dataset.count, config.phantom, config.seed);
  if (write_volumes) {
    for (auto& r : records) {
      const phantom::PhantomCase c = phantom::render(r);
      r.image_file = "image_" + std::to_string(r.id) + ".nii.gz";
      r.mask_file = "mask_" + std::to_string(r.id) + ".nii.gz";
      write_nifti(dir / r.image_file, c.image);
      write_nifti(dir / r.mask_file, c.mask);
      if (log) log("wrote " + patient_id(r));
    }
  }
  phantom::write_manifest(manifest, records);
  if (log) log("manifest: " + manifest.string());
}

void run_train_unet(const PipelineConfig& raw, const Logger& log) {
  const PipelineConfig config = seeded(raw);
  const Workspace w = open_workspace(config);
  std::vector<PhantomData> data;
  for (const auto& r : w.train) data.push_back(load_phantom(r, manifest_dir(w)));
  std::vector<SegmentationSample> samples;
  for (const auto& d : data) samples.push_back({&d.image, &d.mask});
  auto model = build_unet<float>(config.unet, component_seed(config.seed, "unet_init"));
  const auto history =
      train_unet(*model, samples, config.train_unet, config.unet.input_size, epoch_logger(log, "unet"));
  nn::save_checkpoint(w.out / "unet.ckpt", *model,
                      {architecture_json(config.unet), static_cast<std::uint64_t>(config.train_unet.epochs),
                       config.seed});
  write_history_csv(w.out / "unet_history.csv", history);
}

void run_train_classifier(const PipelineConfig& raw, const Logger& log) {
  const PipelineConfig config = seeded(raw);
  const Workspace w = open_workspace(config);
  const auto dataset = finalize_patch_dataset(collect_patches(w, w.train, config, log), config.assembly);
  auto model = build_classifier<float>(config.classifier, component_seed(config.seed, "classifier_init"));
  const auto history = train_classifier(*model, dataset, {}, config.train_classifier, 0, epoch_logger(log, "clf"));
  nn::save_checkpoint(w.out / "classifier.ckpt", *model,
                      {architecture_json(config.classifier),
                       static_cast<std::uint64_t>(config.train_classifier.epochs), config.seed});
  write_history_csv(w.out / "classifier_history.csv", history);
}

CrossvalResult run_crossval(const PipelineConfig& raw, const Logger& log) {
  const PipelineConfig config = seeded(raw);
  const Workspace w = open_workspace(config);
  std::vector<PatientPresence> presence;
  for (const auto& r : w.train) {
    PatientPresence p{patient_id(r), {}};
    for (int c = 0; c < kNumBoi; ++c) p.present[c] = r.truth.centers[c].has_value();
    presence.push_back(p);
  }
  const FoldSplit split = make_folds(presence, config.folds, component_seed(config.seed, "folds"));
  const auto dataset = finalize_patch_dataset(collect_patches(w, w.train, config, log), config.assembly);
  std::map<std::string, int> fold_of;
  for (int f = 0; f < split.k; ++f) {
    for (const auto& id : split.folds[f]) fold_of[id] = f;
  }
  const fs::path dir = w.out / "crossval";
  fs::create_directories(dir);
  {
    nlohmann::json j;
    j["folds"] = split.folds;
    j["presence_histogram"] = split.presence_histogram;
    std::ofstream(dir / "folds.json") << j.dump(2) << '\n';
  }

  struct FoldOutput {
    Evaluation val;
    std::vector<EpochRecord> history;
  };
  auto run_fold = [&](int f) {
    std::vector<LabeledPatch> train, val;
    for (const auto& lp : dataset) (fold_of.at(lp.patient) == f ? val : train).push_back(lp);
    auto model = build_classifier<float>(config.classifier,
                                         component_seed(config.seed, "classifier_init_fold" + std::to_string(f)));
    const fs::path ckpt = dir / ("fold_" + std::to_string(f) + ".ckpt");
    FoldOutput out;
    if (fs::exists(ckpt)) {
      nn::load_checkpoint(ckpt, *model);
      if (log) log("fold " + std::to_string(f) + ": resumed from " + ckpt.string());
    } else {
      ClassifierTrainConfig tc = config.train_classifier;
      tc.seed = component_seed(tc.seed, "fold" + std::to_string(f));
      out.history = train_classifier(*model, train, val, tc, f, epoch_logger(log, "clf"));
      nn::save_checkpoint(ckpt, *model,
                          {architecture_json(config.classifier), static_cast<std::uint64_t>(tc.epochs), tc.seed});
    }
    out.val = evaluate_classifier(*model, val, config.train_classifier.batch_size);
    return out;
  };

  std::vector<FoldOutput> outputs(static_cast<std::size_t>(split.k));
  for (int start = 0; start < split.k; start += config.jobs) {
    std::vector<std::future<FoldOutput>> running;
    for (int f = start; f < std::min(split.k, start + config.jobs); ++f) {
      running.push_back(std::async(config.jobs > 1 ? std::launch::async : std::launch::deferred, run_fold, f));
    }
    for (std::size_t i = 0; i < running.size(); ++i) outputs[start + i] = running[i].get();
  }

  CrossvalResult result;
  std::vector<int> preds, labels;
  std::vector<ClassProbabilities> probs;
  for (auto& o : outputs) {
    preds.insert(preds.end(), o.val.predictions.begin(), o.val.predictions.end());
    labels.insert(labels.end(), o.val.labels.begin(), o.val.labels.end());
    probs.insert(probs.end(), o.val.probabilities.begin(), o.val.probabilities.end());
    result.history.insert(result.history.end(), o.history.begin(), o.history.end());
  }
  result.pooled = classification_metrics(preds, labels);
  result.auc = roc_auc(probs, labels);
  write_classification_csv((dir / "metrics.csv").string(), result.pooled, &result.auc);
  write_history_csv(dir / "history.csv", result.history);
  return result;
}

phantom::GroundTruth truth_on_grid(const phantom::GroundTruth& truth, const Spacing3& from, double to) {
  auto m = [&](int i, double s) { return static_cast<int>(std::lround((i + 0.5) * s / to - 0.5)); };
  phantom::GroundTruth out = truth;
  for (auto& c : out.centers) {
    if (c) c = Index3{m(c->x, from.sx), m(c->y, from.sy), m(c->z, from.sz)};
  }
  return out;
}

EvalResult run_eval(const PipelineConfig& raw, SegmentationMode mode, const Logger& log) {
  const PipelineConfig config = seeded(raw);
  const Workspace w = open_workspace(config);
  const fs::path clf_path = config.paths.classifier_checkpoint.empty() ? w.out / "classifier.ckpt"
                                                                       : fs::path(config.paths.classifier_checkpoint);
  const ClassifierEnsemble ensemble = load_classifiers(clf_path);
  if (ensemble.input_size() != config.classifier.input_size) {
    throw ConfigError("classifier.input_size: checkpoint expects " + std::to_string(ensemble.input_size()));
  }
  LoadedModel unet;
  PatchPredictor segmenter;
  if (mode == SegmentationMode::kUNet) {
    const fs::path p = config.paths.unet_checkpoint.empty() ? w.out / "unet.ckpt" : fs::path(config.paths.unet_checkpoint);
    unet = load_model(p.string());
    if (unet.type != "unet") throw InvalidArgument("'" + p.string() + "' is not a U-Net checkpoint");
    segmenter = unet_predictor(*unet.model);
  }
  EvalResult result;
  std::vector<RecognitionReport> reports;
  for (const auto& r : w.test) {
    const PhantomData d = load_phantom(r, manifest_dir(w));
    const Detection det = detect(d.image, mode == SegmentationMode::kExpert ? &d.mask : nullptr,
                                 mode == SegmentationMode::kUNet ? &segmenter : nullptr, ensemble.views(), config);
    const phantom::GroundTruth truth = truth_on_grid(r.truth, d.image.spacing(), config.target_spacing);
    if (mode == SegmentationMode::kUNet) {
      const MaskVolume ref = resample(d.mask, isotropic(config.target_spacing));
      result.segmentation.push_back(segmentation_metrics(det.mask, ref));
    }
    const RecognitionReport rep = patient_recognition(det.candidates, truth, config.threshold);
    if (log) {
      log(patient_id(r) + ": " + std::to_string(det.candidates.size()) + " candidates, " + std::to_string(rep.hits) +
          "/" + std::to_string(rep.present) + " recognised");
    }
    result.reports.emplace_back(patient_id(r), rep);
    reports.push_back(rep);
    result.candidates.push_back({patient_id(r), det.candidates, truth});
  }
  result.summary = summarize(reports);
  const fs::path dir = w.out / ("eval_" + to_string(mode));
  write_recognition_csv(dir / "recognition.csv", result.reports);
  write_summary_csv(dir / "summary.csv", result.summary);
  if (!result.segmentation.empty()) {
    std::ofstream out(dir / "segmentation.csv");
    out.precision(9);
    out << "patient,dsc,precision,recall,hd95\n";
    for (std::size_t i = 0; i < result.segmentation.size(); ++i) {
      const auto& s = result.segmentation[i];
      out << result.reports[i].first << ',' << s.dsc << ',' << s.precision.value_or(NAN) << ','
          << s.recall.value_or(NAN) << ',' << s.hd95 << '\n';
    }
  }
  return result;
}

std::vector<SweepPoint> run_sweep(const PipelineConfig& config, SegmentationMode mode, const Logger& log) {
  const EvalResult ev = run_eval(config, mode, log);
  const auto sweep = threshold_sweep(ev.candidates, default_sweep_thresholds());
  write_sweep_csv(fs::path(config.output_dir) / ("sweep_" + to_string(mode) + ".csv"), sweep);
  return sweep;
}

void write_summary_csv(const fs::path& path, const RecognitionSummary& s) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write summary '" + path.string() + "'");
  out.precision(9);
  out << "class,hits,present,rate\n";
  for (int c = 0; c < kNumBoi; ++c) {
    out << label_name(from_index(c)) << ',' << s.hits[c] << ',' << s.present[c] << ',';
    if (s.present[c] > 0) out << static_cast<double>(s.hits[c]) / s.present[c];
    out << '\n';
  }
  out << "overall," << s.total_hits << ',' << s.total_present << ',';
  if (auto r = s.rate()) out << *r;
  out << '\n';
}

}  // namespace cowbif
