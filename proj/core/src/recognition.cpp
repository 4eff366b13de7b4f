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

#include "cowbif/recognition.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace cowbif {

bool is_hit(double distance, double threshold) {
  if (threshold == 0.0) return distance == 0.0;
  return distance < threshold;
}

RecognitionReport patient_recognition(const std::vector<Candidate>& candidates,
                                      const phantom::GroundTruth& truth, double threshold) {
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
    throw InvalidArgument("recognition threshold must be a finite value >= 0");
  }
  RecognitionReport r;
  r.threshold = threshold;
  for (int c = 0; c < kNumBoi; ++c) {
    ClassRecognition& cr = r.classes[c];
    cr.label = from_index(c);
    cr.truth = truth.centers[c];
    cr.present = cr.truth.has_value();
    const Candidate* best = nullptr;
    for (const Candidate& cand : candidates) {
      const double p = cand.probs[c];
      if (best == nullptr || p > best->probs[c] || (p == best->probs[c] && cand.center < best->center)) {
        best = &cand;
      }
    }
    if (best != nullptr) {
      cr.predicted = best->center;
      cr.confidence = best->probs[c];
    }
    if (!cr.present) continue;
    ++r.present;
    cr.distance = best != nullptr ? voxel_distance(best->center, *cr.truth)
                                  : std::numeric_limits<double>::infinity();
    cr.hit = is_hit(cr.distance, threshold);
    r.hits += cr.hit;
  }
  if (r.present > 0) r.rate = static_cast<double>(r.hits) / r.present;
  return r;
}

std::optional<double> SweepPoint::rate(int c) const {
  if (present[c] == 0) return std::nullopt;
  return static_cast<double>(hits[c]) / present[c];
}

std::optional<double> SweepPoint::overall() const {
  if (total_present == 0) return std::nullopt;
  return static_cast<double>(total_hits) / total_present;
}

std::vector<double> default_sweep_thresholds() {
  std::vector<double> t;
  for (int v = 0; v <= 32; v += 2) t.push_back(v);
  return t;
}

std::vector<SweepPoint> threshold_sweep(const std::vector<PatientCandidates>& patients,
                                        const std::vector<double>& thresholds) {
  std::vector<SweepPoint> out;
  for (double th : thresholds) {
    SweepPoint sp;
    sp.threshold = th;
    for (const auto& p : patients) {
      const RecognitionReport r = patient_recognition(p.candidates, p.truth, th);
      for (int c = 0; c < kNumBoi; ++c) {
        if (!r.classes[c].present) continue;
        sp.present[c] += 1;
        sp.hits[c] += r.classes[c].hit;
      }
      sp.total_hits += r.hits;
      sp.total_present += r.present;
    }
    out.push_back(sp);
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& sweep) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write sweep '" + path.string() + "'");
  out.precision(9);
  out << "threshold,class,hits,present,rate\n";
  for (const auto& sp : sweep) {
    for (int c = 0; c < kNumBoi; ++c) {
      out << sp.threshold << ',' << label_name(from_index(c)) << ',' << sp.hits[c] << ',' << sp.present[c] << ',';
      if (auto r = sp.rate(c)) out << *r;
      out << '\n';
    }
    out << sp.threshold << ",overall," << sp.total_hits << ',' << sp.total_present << ',';
    if (auto r = sp.overall()) out << *r;
    out << '\n';
  }
}

void write_recognition_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, RecognitionReport>>& reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write recognition report '" + path.string() + "'");
  out.precision(9);
  out << "patient,class,present,pred_x,pred_y,pred_z,confidence,distance,hit,threshold\n";
  for (const auto& [patient, r] : reports) {
    for (const auto& c : r.classes) {
      out << patient << ',' << label_name(c.label) << ',' << (c.present ? 1 : 0) << ',';
      if (c.predicted) {
        out << c.predicted->x << ',' << c.predicted->y << ',' << c.predicted->z << ',';
      } else {
        out << ",,,";
      }
      out << c.confidence << ',';
      if (c.present) out << c.distance;
      out << ',' << (c.hit ? 1 : 0) << ',' << r.threshold << '\n';
    }
  }
}

std::optional<double> RecognitionSummary::rate() const {
  if (total_present == 0) return std::nullopt;
  return static_cast<double>(total_hits) / total_present;
}

RecognitionSummary summarize(const std::vector<RecognitionReport>& reports) {
  RecognitionSummary s;
  for (const auto& r : reports) {
    for (int c = 0; c < kNumBoi; ++c) {
      if (!r.classes[c].present) continue;
      s.present[c] += 1;
      s.hits[c] += r.classes[c].hit;
    }
    s.total_hits += r.hits;
    s.total_present += r.present;
  }
  return s;
}

}  // namespace cowbif
