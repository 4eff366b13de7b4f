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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cowbif/graph.hpp"
#include "cowbif/labels.hpp"
#include "cowbif/phantom.hpp"
#include "cowbif/volume.hpp"

namespace cowbif {

// ------------------------------------------------------------------- folds

struct PatientPresence {
  std::string id;
  std::array<bool, kNumBoi> present{};
};

struct FoldSplit {
  int k = 0;
  std::vector<std::vector<std::string>> folds;                // patient ids per fold
  std::vector<std::array<int, kNumBoi>> presence_histogram;  // per fold, per class

  // Ideal per-fold count of a class: fold size * class total / patients.
  double ideal_share(int fold, int class_index) const;
};

// Patient-level stratified k-fold split. Fold sizes differ by at most one
// (larger folds first); a greedy assignment followed by pairwise swaps keeps
// each fold's per-class presence count close to its ideal share.
FoldSplit make_folds(const std::vector<PatientPresence>& patients, int k, std::uint64_t seed);

// --------------------------------------------------------------- augmentation

// Mirror of the patch along the left/right axis with the label swapped.
std::pair<Patch, Label> flip_sample(const Patch& patch, Label label);
// Applies flip_sample with probability 0.5.
std::pair<Patch, Label> augment_flip(const Patch& patch, Label label, std::mt19937_64& rng);

// ------------------------------------------------------------ patch assembly

struct LabeledPatch {
  std::string patient;
  Label label = Label::BoNI;
  Patch patch;  // raw intensities; normalisation happens at training time
};

struct AssemblyConfig {
  int patch_size = 32;
  double match_radius = 5.0;        // GT centre -> nearest junction, voxels
  double boni_min_distance = 16.0;  // BoNI junctions keep this far from every GT centre
  double boni_ratio = 2.0;          // BoNI count = ratio * mean per-class BoI count
  std::uint64_t seed = 0;
};

struct PatientInput {
  std::string id;
  const Volume3D* image = nullptr;
  const phantom::GroundTruth* truth = nullptr;
  const skel::VesselGraph* graph = nullptr;
};

struct AssemblyStats {
  int boi = 0;
  int boni = 0;
  int skipped = 0;  // present GT labels without a junction inside match_radius
};

// Per-patient half of the assembly: the bifurcation patches plus every
// BoNI-eligible junction patch, before the dataset-wide BoNI cap.
struct PatientPatches {
  std::string id;
  std::vector<LabeledPatch> boi;
  std::vector<LabeledPatch> boni_candidates;
  int skipped = 0;
};
PatientPatches collect_patient_patches(const PatientInput& patient, const AssemblyConfig& config);
// Applies the BoNI cap (round-robin over patients after a seeded shuffle).
std::vector<LabeledPatch> finalize_patch_dataset(std::vector<PatientPatches> patients,
                                                 const AssemblyConfig& config, AssemblyStats* stats = nullptr);

// collect_patient_patches for every patient, then finalize_patch_dataset.
std::vector<LabeledPatch> assemble_patch_dataset(const std::vector<PatientInput>& patients,
                                                 const AssemblyConfig& config,
                                                 AssemblyStats* stats = nullptr);

double voxel_distance(const Index3& a, const Index3& b);

}  // namespace cowbif
