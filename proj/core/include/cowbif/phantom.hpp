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
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cowbif/labels.hpp"
#include "cowbif/volume.hpp"

// Synthetic Circle-of-Willis phantoms with exact ground truth.
namespace cowbif::phantom {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// Generation parameters. Probabilities other than p_truncated_posterior are
// engineering defaults; only the posterior truncation rate has a clinical
// reference (80% of acquisitions miss the vertebral/PICA region).
struct PhantomSpec {
  std::uint64_t seed = 0;
  Dims3 dims{192, 192, 192};
  Spacing3 spacing{0.4, 0.4, 0.4};

  double p_missing_pcom_left = 0.1;
  double p_missing_pcom_right = 0.1;
  double p_missing_acom = 0.05;
  double p_hypoplastic_pcom = 0.2;  // per side
  double hypoplastic_scale = 0.6;   // radius factor in (0, 1)
  double p_truncated_posterior = 0.8;

  int distal_branch_count = 8;

  double background_level = 0.1;
  double vessel_intensity = 1.0;
  double noise_sigma = 0.08;
  double jitter_mm = 0.5;  // control-point displacement sigma

  // Throws InvalidArgument on out-of-range fields or a grid too small for
  // the template.
  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct VariationFlags {
  bool missing_pcom_left = false;
  bool missing_pcom_right = false;
  bool missing_acom = false;
  bool hypoplastic_pcom_left = false;
  bool hypoplastic_pcom_right = false;
  bool truncated_posterior = false;
  friend bool operator==(const VariationFlags&, const VariationFlags&) = default;
};

// Centerline coordinates are millimetres relative to the grid centre, so the
// left/right mirror is an exact sign flip of x.
struct Segment {
  std::string name;
  std::vector<Vec3> centerline;
  std::vector<double> radius;  // one per centerline point, mm
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ArteryTree {
  std::vector<Segment> segments;
  VariationFlags flags;
  // Junction position of every present bifurcation of interest.
  std::array<std::optional<Vec3>, kNumBoi> boi_points;
  friend bool operator==(const ArteryTree&, const ArteryTree&) = default;
};

struct GroundTruth {
  std::array<std::optional<Index3>, kNumBoi> centers;

  bool present(Label l) const { return centers[static_cast<std::size_t>(to_index(l))].has_value(); }
  const std::optional<Index3>& center(Label l) const {
    return centers[static_cast<std::size_t>(to_index(l))];
  }
  int count() const;
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct PhantomCase {
  PhantomSpec spec;
  VariationFlags flags;
  GroundTruth truth;
  Volume3D image;
  MaskVolume mask;
};

// One manifest row: enough to regenerate the phantom bit-identically.
struct PhantomRecord {
  int id = 0;
  PhantomSpec spec;
  VariationFlags flags;
  GroundTruth truth;
  std::string image_file;  // relative to the manifest, may be empty
  std::string mask_file;
  friend bool operator==(const PhantomRecord&, const PhantomRecord&) = default;
};

// Voxel containing a point given in centre-relative millimetres.
Index3 to_voxel(const Vec3& p, const Dims3& dims, const Spacing3& spacing);
// Centre-relative millimetre position of a voxel centre.
Vec3 to_millimetres(const Index3& v, const Dims3& dims, const Spacing3& spacing);

std::pair<ArteryTree, GroundTruth> generate_tree(const PhantomSpec& spec);
ArteryTree add_distal_branches(ArteryTree tree, const PhantomSpec& spec);
// Throws GeometryError naming the first segment that leaves the grid.
std::pair<Volume3D, MaskVolume> rasterize(const ArteryTree& tree, const PhantomSpec& spec);
// Mask only, no noise stream consumed.
MaskVolume rasterize_mask(const ArteryTree& tree, const PhantomSpec& spec);

// Negates x, swaps _L/_R segment names, side flags and the paired labels.
ArteryTree mirror_tree(const ArteryTree& tree);

// generate_tree + add_distal_branches + rasterize.
PhantomCase generate_phantom(const PhantomSpec& spec);

// Per-phantom seed derived from the dataset seed (splitmix64 stream).
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index);

// n records with independent seeds. Only trees are built; volumes are
// rendered on demand with render().
std::vector<PhantomRecord> sample_manifest(int n, const PhantomSpec& base, std::uint64_t base_seed);
PhantomCase render(const PhantomRecord& record);
std::vector<PhantomCase> sample_dataset(int n, const PhantomSpec& base, std::uint64_t base_seed);

// Manifest: one JSON object per line.
std::string to_manifest_line(const PhantomRecord& record);
PhantomRecord parse_manifest_line(const std::string& line);
void write_manifest(const std::filesystem::path& path, const std::vector<PhantomRecord>& records);
std::vector<PhantomRecord> read_manifest(const std::filesystem::path& path);

}  // namespace cowbif::phantom
