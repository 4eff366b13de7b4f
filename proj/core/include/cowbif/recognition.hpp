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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cowbif/phantom.hpp"
#include "cowbif/training.hpp"

namespace cowbif {

struct Candidate {
  Index3 center;
  ClassProbabilities probs{};
};

struct ClassRecognition {
  Label label = Label::A;
  bool present = false;                // class exists in the ground truth
  std::optional<Index3> predicted;     // highest-confidence candidate for the class
  double confidence = 0.0;
  std::optional<Index3> truth;
  double distance = 0.0;               // voxels; +inf without a prediction
  bool hit = false;
};

struct RecognitionReport {
  double threshold = 16.0;
  std::array<ClassRecognition, kNumBoi> classes{};
  int hits = 0;
  int present = 0;
  std::optional<double> rate;  // hits / present
};

// Hit rule: distance < threshold. A threshold of exactly 0 counts exact
// matches (distance 0) so the sweep starts at the coincident-centre rate.
bool is_hit(double distance, double threshold);

// For each bifurcation class the candidate with the largest probability of
// that class is the prediction (ties go to the lexicographically smaller
// voxel coordinate). Classes absent from the ground truth are excluded.
RecognitionReport patient_recognition(const std::vector<Candidate>& candidates,
                                      const phantom::GroundTruth& truth, double threshold);

struct PatientCandidates {
  std::string patient;
  std::vector<Candidate> candidates;
  phantom::GroundTruth truth;
};

struct SweepPoint {
  double threshold = 0.0;
  std::array<int, kNumBoi> hits{};
  std::array<int, kNumBoi> present{};
  int total_hits = 0;
  int total_present = 0;

  std::optional<double> rate(int class_index) const;
  std::optional<double> overall() const;
};

std::vector<double> default_sweep_thresholds();  // 0, 2, ..., 32
std::vector<SweepPoint> threshold_sweep(const std::vector<PatientCandidates>& patients,
                                        const std::vector<double>& thresholds);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& sweep);
// Rows of (patient, class, present, predicted xyz, confidence, distance, hit, Th).
void write_recognition_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, RecognitionReport>>& reports);

// Per-class recognition aggregated over patients at one threshold.
struct RecognitionSummary {
  std::array<int, kNumBoi> hits{};
  std::array<int, kNumBoi> present{};
  int total_hits = 0;
  int total_present = 0;
  std::optional<double> rate() const;
};
RecognitionSummary summarize(const std::vector<RecognitionReport>& reports);

}  // namespace cowbif
