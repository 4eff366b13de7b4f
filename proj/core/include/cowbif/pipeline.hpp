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

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cowbif/config.hpp"
#include "cowbif/graph.hpp"
#include "cowbif/metrics.hpp"
#include "cowbif/models.hpp"
#include "cowbif/recognition.hpp"

namespace cowbif {

enum class SegmentationMode { kExpert, kUNet };
SegmentationMode parse_segmentation_mode(const std::string& name);
std::string to_string(SegmentationMode mode);

// Skeleton -> graph -> spur pruning.
skel::VesselGraph extract_graph(const MaskVolume& mask, int min_spur_length);

struct Detection {
  MaskVolume mask;
  skel::VesselGraph graph;
  std::vector<Candidate> candidates;
};

// Runs the detection chain on one volume: resample to the target spacing,
// segment (U-Net) or take the supplied expert mask, extract the graph,
// classify a patch around every junction. Candidate and mask coordinates are
// on the resampled grid. Failures are rethrown as StageError naming the
// stage; an empty mask yields an empty candidate list.
Detection detect(const Volume3D& volume, const MaskVolume* expert_mask, const PatchPredictor* segmenter,
                 const std::vector<nn::Module<float>*>& classifiers, const PipelineConfig& config);

// A loaded classifier ensemble: one checkpoint, or every *.ckpt file of a
// directory (sorted by name).
struct ClassifierEnsemble {
  std::vector<LoadedModel> members;
  std::vector<nn::Module<float>*> views() const;
  int input_size() const;
};
ClassifierEnsemble load_classifiers(const std::filesystem::path& path);

// Phantom access: the stored volumes when present next to the manifest,
// otherwise a deterministic re-render.
struct PhantomData {
  phantom::PhantomRecord record;
  Volume3D image;
  MaskVolume mask;
};
PhantomData load_phantom(const phantom::PhantomRecord& record, const std::filesystem::path& manifest_dir);

using Logger = std::function<void(const std::string&)>;

// Subcommand bodies. Every artifact lands under config.output_dir.
void run_phantom_gen(const PipelineConfig& config, bool write_volumes, const Logger& log);
void run_train_unet(const PipelineConfig& config, const Logger& log);
void run_train_classifier(const PipelineConfig& config, const Logger& log);

struct CrossvalResult {
  ClassificationReport pooled;
  AucReport auc;
  std::vector<EpochRecord> history;
};
CrossvalResult run_crossval(const PipelineConfig& config, const Logger& log);

struct EvalResult {
  std::vector<std::pair<std::string, RecognitionReport>> reports;
  RecognitionSummary summary;
  std::vector<PatientCandidates> candidates;
  std::vector<SegmentationReport> segmentation;  // U-Net mode only
};
EvalResult run_eval(const PipelineConfig& config, SegmentationMode mode, const Logger& log);
std::vector<SweepPoint> run_sweep(const PipelineConfig& config, SegmentationMode mode, const Logger& log);

// Writes a per-class recognition table (class, hits, present, rate).
void write_summary_csv(const std::filesystem::path& path, const RecognitionSummary& summary);

// Ground-truth centres moved from a grid of spacing `from` onto the
// isotropic grid of spacing `to` used by detect.
phantom::GroundTruth truth_on_grid(const phantom::GroundTruth& truth, const Spacing3& from, double to);

// Manifest location with relative paths resolved against output_dir.
std::filesystem::path manifest_path(const PipelineConfig& config);

// Labelled classifier patches (expert-mask candidates) of the training or
// the held-out phantoms, BoNI-capped with the assembly seed.
std::vector<LabeledPatch> build_patch_set(const PipelineConfig& config, bool held_out, const Logger& log);

// Held-out split: the last test_count records are the test set.
std::pair<std::vector<phantom::PhantomRecord>, std::vector<phantom::PhantomRecord>> split_train_test(
    const std::vector<phantom::PhantomRecord>& records, int test_count);

// Seeds derived from the root seed for each stochastic component.
std::uint64_t component_seed(std::uint64_t root, const std::string& component);

}  // namespace cowbif
