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

#include "cowbif/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cowbif {

double voxel_distance(const Index3& a, const Index3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// -------------------------------------------------------------------- folds

double FoldSplit::ideal_share(int fold, int class_index) const {
  int total = 0, patients = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    total += presence_histogram[f][static_cast<std::size_t>(class_index)];
    patients += static_cast<int>(folds[f].size());
  }
  if (patients == 0) return 0.0;
  return static_cast<double>(folds[static_cast<std::size_t>(fold)].size()) * total / patients;
}

namespace {

struct FoldState {
  std::vector<int> capacity;
  std::vector<std::array<int, kNumBoi>> counts;
  std::vector<std::array<double, kNumBoi>> ideal;

  double cost(int f) const {
    double c = 0.0;
    for (int j = 0; j < kNumBoi; ++j) {
      const double d = counts[f][j] - ideal[f][j];
      c += d * d;
    }
    return c;
  }
  void apply(int f, const std::array<bool, kNumBoi>& p, int sign) {
    for (int j = 0; j < kNumBoi; ++j) counts[f][j] += p[j] ? sign : 0;
  }
};

}  // namespace

FoldSplit make_folds(const std::vector<PatientPresence>& patients, int k, std::uint64_t seed) {
  const int n = static_cast<int>(patients.size());
  if (k < 2) throw InvalidArgument("make_folds needs k >= 2");
  if (n < k) {
    throw InvalidArgument("make_folds needs at least k=" + std::to_string(k) + " patients, got " +
                          std::to_string(n));
  }
  std::array<int, kNumBoi> totals{};
  for (const auto& p : patients) {
    for (int j = 0; j < kNumBoi; ++j) totals[j] += p.present[j];
  }
  FoldState st;
  st.capacity.resize(k);
  st.counts.assign(k, {});
  st.ideal.resize(k);
  for (int f = 0; f < k; ++f) {
    st.capacity[f] = n / k + (f < n % k ? 1 : 0);
    for (int j = 0; j < kNumBoi; ++j) st.ideal[f][j] = static_cast<double>(st.capacity[f]) * totals[j] / n;
  }

  // Patients with rarer presence patterns first, ties shuffled by seed.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto rarity = [&](int i) {
    double r = 0.0;
    for (int j = 0; j < kNumBoi; ++j) {
      const double share = static_cast<double>(totals[j]) / n;
      r += patients[i].present[j] ? 1.0 - share : share;
    }
    return r;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rarity(a) > rarity(b); });

  std::vector<int> fold_of(n, -1);
  std::vector<int> filled(k, 0);
  for (int i : order) {
    int best = -1;
    double best_gain = std::numeric_limits<double>::infinity();
    for (int f = 0; f < k; ++f) {
      if (filled[f] >= st.capacity[f]) continue;
      const double before = st.cost(f);
      st.apply(f, patients[i].present, +1);
      // Remaining room breaks ties so folds fill evenly.
      const double gain = st.cost(f) - before - 1e-9 * (st.capacity[f] - filled[f]);
      st.apply(f, patients[i].present, -1);
      if (gain < best_gain) {
        best_gain = gain;
        best = f;
      }
    }
    fold_of[i] = best;
    filled[best] += 1;
    st.apply(best, patients[i].present, +1);
  }

  // Pairwise swaps until no swap lowers the total squared deviation.
  bool improved = true;
  for (int round = 0; improved && round < 100; ++round) {
    improved = false;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        const int fa = fold_of[a], fb = fold_of[b];
        if (fa == fb || patients[a].present == patients[b].present) continue;
        const double before = st.cost(fa) + st.cost(fb);
        st.apply(fa, patients[a].present, -1);
        st.apply(fa, patients[b].present, +1);
        st.apply(fb, patients[b].present, -1);
        st.apply(fb, patients[a].present, +1);
        if (st.cost(fa) + st.cost(fb) < before - 1e-12) {
          std::swap(fold_of[a], fold_of[b]);
          improved = true;
        } else {
          st.apply(fa, patients[b].present, -1);
          st.apply(fa, patients[a].present, +1);
          st.apply(fb, patients[a].present, -1);
          st.apply(fb, patients[b].present, +1);
        }
      }
    }
  }

  FoldSplit split;
  split.k = k;
  split.folds.resize(k);
  split.presence_histogram = st.counts;
  for (int i = 0; i < n; ++i) split.folds[fold_of[i]].push_back(patients[i].id);
  return split;
}

// ------------------------------------------------------------- augmentation

std::pair<Patch, Label> flip_sample(const Patch& patch, Label label) {
  return {axial_flip(patch), swap_left_right(label)};
}

std::pair<Patch, Label> augment_flip(const Patch& patch, Label label, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  if (coin(rng)) return flip_sample(patch, label);
  return {patch, label};
}

// ----------------------------------------------------------- patch assembly

PatientPatches collect_patient_patches(const PatientInput& in, const AssemblyConfig& config) {
  if (in.image == nullptr || in.truth == nullptr || in.graph == nullptr) {
    throw InvalidArgument("assemble_patch_dataset: patient '" + in.id + "' lacks image, truth or graph");
  }
  PatientPatches out;
  out.id = in.id;
  const std::vector<Index3> junctions = skel::candidate_centers(*in.graph);
  for (Label label : kBoiLabels) {
    const auto& gt = in.truth->center(label);
    if (!gt) continue;
    const Index3* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const Index3& j : junctions) {
      const double d = voxel_distance(j, *gt);
      if (d < best_d || (d == best_d && best != nullptr && j < *best)) {
        best_d = d;
        best = &j;
      }
    }
    if (best == nullptr || best_d > config.match_radius) {
      spdlog::warn("patient {}: no junction within {} voxels of label {}, skipped", in.id, config.match_radius,
                   label_name(label));
      ++out.skipped;
      continue;
    }
    out.boi.push_back({in.id, label, crop_patch(*in.image, *best, config.patch_size)});
  }
  for (const Index3& j : junctions) {
    bool far = true;
    for (const auto& gt : in.truth->centers) {
      if (gt && voxel_distance(j, *gt) <= config.boni_min_distance) {
        far = false;
        break;
      }
    }
    if (far) out.boni_candidates.push_back({in.id, Label::BoNI, crop_patch(*in.image, j, config.patch_size)});
  }
  return out;
}

std::vector<LabeledPatch> finalize_patch_dataset(std::vector<PatientPatches> patients, const AssemblyConfig& config,
                                                 AssemblyStats* stats) {
  AssemblyStats local;
  std::vector<LabeledPatch> out;
  for (auto& p : patients) {
    local.boi += static_cast<int>(p.boi.size());
    local.skipped += p.skipped;
    for (auto& lp : p.boi) out.push_back(std::move(lp));
  }
  const double mean_per_class = static_cast<double>(local.boi) / kNumBoi;
  const int cap = static_cast<int>(std::lround(config.boni_ratio * mean_per_class));
  std::mt19937_64 rng(config.seed);
  for (auto& p : patients) std::shuffle(p.boni_candidates.begin(), p.boni_candidates.end(), rng);
  // Round-robin over patients so negatives are spread across the cohort.
  for (std::size_t round = 0; local.boni < cap; ++round) {
    bool any = false;
    for (std::size_t i = 0; i < patients.size() && local.boni < cap; ++i) {
      if (round >= patients[i].boni_candidates.size()) continue;
      any = true;
      out.push_back(std::move(patients[i].boni_candidates[round]));
      ++local.boni;
    }
    if (!any) break;
  }
  if (stats != nullptr) *stats = local;
  return out;
}

std::vector<LabeledPatch> assemble_patch_dataset(const std::vector<PatientInput>& patients,
                                                 const AssemblyConfig& config, AssemblyStats* stats) {
  std::vector<PatientPatches> collected;
  collected.reserve(patients.size());
  for (const auto& p : patients) collected.push_back(collect_patient_patches(p, config));
  return finalize_patch_dataset(std::move(collected), config, stats);
}

}  // namespace cowbif
