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

#include "cowbif/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cowbif {

template <typename T>
Grid<T>::Grid(Dims3 dims, Spacing3 spacing, T fill)
    : dims_(dims), spacing_(spacing) {
  if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
    throw InvalidArgument("grid dims must be positive");
  }
  validate_spacing(spacing);
  data_.assign(dims.count(), fill);
}

template <typename T>
Grid<T>::Grid(Dims3 dims, Spacing3 spacing, std::vector<T> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
    throw InvalidArgument("grid dims must be positive");
  }
  validate_spacing(spacing);
  if (data_.size() != dims.count()) {
    throw InvalidArgument("grid data length " + std::to_string(data_.size()) +
                          " does not match dims product " + std::to_string(dims.count()));
  }
}

template class Grid<float>;
template class Grid<std::uint8_t>;

void validate_spacing(const Spacing3& s) {
  for (double v : {s.sx, s.sy, s.sz}) {
    if (!std::isfinite(v) || v <= 0.0) {
      throw InvalidArgument("spacing must be finite and > 0, got " + std::to_string(v));
    }
  }
}

void validate_finite(const Volume3D& vol) {
  for (float v : vol.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("volume contains a non-finite sample");
  }
}

bool is_binary(const MaskVolume& mask) {
  return std::all_of(mask.data().begin(), mask.data().end(),
                     [](std::uint8_t v) { return v <= 1; });
}

namespace {

int resampled_extent(int n, double in_spacing, double out_spacing) {
  const double exact = static_cast<double>(n) * in_spacing / out_spacing;
  return std::max(1, static_cast<int>(std::lround(exact)));
}

// Source coordinate of output voxel i, clamped to the input index range.
double source_position(int i, double in_spacing, double out_spacing, int n_in) {
  const double pos = (static_cast<double>(i) + 0.5) * (out_spacing / in_spacing) - 0.5;
  return std::clamp(pos, 0.0, static_cast<double>(n_in - 1));
}

struct AxisTable {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
  std::vector<int> nearest;
};

AxisTable make_axis_table(int n_in, int n_out, double in_spacing, double out_spacing) {
  AxisTable t;
  t.lo.resize(n_out);
  t.hi.resize(n_out);
  t.frac.resize(n_out);
  t.nearest.resize(n_out);
  for (int i = 0; i < n_out; ++i) {
    const double p = source_position(i, in_spacing, out_spacing, n_in);
    const int lo = static_cast<int>(std::floor(p));
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, n_in - 1);
    t.frac[i] = p - lo;
    t.nearest[i] = std::min(static_cast<int>(std::floor(p + 0.5)), n_in - 1);
  }
  return t;
}

// a + f*(b-a) keeps constants exact.
inline double lerp(double a, double b, double f) { return a + f * (b - a); }

template <typename T>
Grid<T> resample_nearest(const Grid<T>& in, const Spacing3& target) {
  const Dims3 d = in.dims();
  const Spacing3 s = in.spacing();
  const Dims3 od{resampled_extent(d.nx, s.sx, target.sx), resampled_extent(d.ny, s.sy, target.sy),
                 resampled_extent(d.nz, s.sz, target.sz)};
  const AxisTable tx = make_axis_table(d.nx, od.nx, s.sx, target.sx);
  const AxisTable ty = make_axis_table(d.ny, od.ny, s.sy, target.sy);
  const AxisTable tz = make_axis_table(d.nz, od.nz, s.sz, target.sz);
  Grid<T> out(od, target);
  for (int z = 0; z < od.nz; ++z) {
    for (int y = 0; y < od.ny; ++y) {
      for (int x = 0; x < od.nx; ++x) {
        out(x, y, z) = in(tx.nearest[x], ty.nearest[y], tz.nearest[z]);
      }
    }
  }
  return out;
}

void check_target(const Spacing3& target) { validate_spacing(target); }

template <typename T>
Grid<T> flip_grid(const Grid<T>& in) {
  Grid<T> out = in;
  const Dims3 d = in.dims();
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) out(x, y, z) = in(d.nx - 1 - x, y, z);
    }
  }
  return out;
}

template <typename T, typename Out>
int crop_into(const Grid<T>& src, const Index3& center, int size, std::vector<Out>& out) {
  if (size <= 0 || size % 2 != 0) {
    throw InvalidArgument("patch size must be positive and even, got " + std::to_string(size));
  }
  if (!src.dims().contains(center)) {
    throw InvalidArgument("patch center (" + std::to_string(center.x) + "," +
                          std::to_string(center.y) + "," + std::to_string(center.z) +
                          ") lies outside the volume");
  }
  const int half = size / 2;
  const Dims3 d = src.dims();
  out.assign(static_cast<std::size_t>(size) * size * size, Out{});
  int inside = 0;
  for (int k = 0; k < size; ++k) {
    const int z = center.z - half + k;
    if (z < 0 || z >= d.nz) continue;
    for (int j = 0; j < size; ++j) {
      const int y = center.y - half + j;
      if (y < 0 || y >= d.ny) continue;
      const int x0 = std::max(0, center.x - half);
      const int x1 = std::min(d.nx, center.x - half + size);
      for (int x = x0; x < x1; ++x) {
        const int i = x - (center.x - half);
        out[(static_cast<std::size_t>(k) * size + j) * size + i] = static_cast<Out>(src(x, y, z));
      }
      inside += x1 - x0;
    }
  }
  return size * size * size - inside;
}

}  // namespace

Volume3D resample(const Volume3D& vol, const Spacing3& target, Interpolation mode) {
  check_target(target);
  if (vol.spacing() == target) return vol;
  if (mode == Interpolation::kNearest) return resample_nearest(vol, target);

  const Dims3 d = vol.dims();
  const Spacing3 s = vol.spacing();
  const Dims3 od{resampled_extent(d.nx, s.sx, target.sx), resampled_extent(d.ny, s.sy, target.sy),
                 resampled_extent(d.nz, s.sz, target.sz)};
  const AxisTable tx = make_axis_table(d.nx, od.nx, s.sx, target.sx);
  const AxisTable ty = make_axis_table(d.ny, od.ny, s.sy, target.sy);
  const AxisTable tz = make_axis_table(d.nz, od.nz, s.sz, target.sz);
  Volume3D out(od, target);
  for (int z = 0; z < od.nz; ++z) {
    const int z0 = tz.lo[z], z1 = tz.hi[z];
    const double fz = tz.frac[z];
    for (int y = 0; y < od.ny; ++y) {
      const int y0 = ty.lo[y], y1 = ty.hi[y];
      const double fy = ty.frac[y];
      for (int x = 0; x < od.nx; ++x) {
        const int x0 = tx.lo[x], x1 = tx.hi[x];
        const double fx = tx.frac[x];
        const double c00 = lerp(vol(x0, y0, z0), vol(x1, y0, z0), fx);
        const double c10 = lerp(vol(x0, y1, z0), vol(x1, y1, z0), fx);
        const double c01 = lerp(vol(x0, y0, z1), vol(x1, y0, z1), fx);
        const double c11 = lerp(vol(x0, y1, z1), vol(x1, y1, z1), fx);
        const double c0 = lerp(c00, c10, fy);
        const double c1 = lerp(c01, c11, fy);
        out(x, y, z) = static_cast<float>(lerp(c0, c1, fz));
      }
    }
  }
  return out;
}

MaskVolume resample(const MaskVolume& mask, const Spacing3& target, Interpolation mode) {
  check_target(target);
  if (mode != Interpolation::kNearest) {
    throw InvalidArgument("masks can only be resampled with nearest-neighbour interpolation");
  }
  if (mask.spacing() == target) return mask;
  return resample_nearest(mask, target);
}

void zscore_normalize_inplace(std::span<float> values) {
  if (values.empty()) return;
  double sum = 0.0;
  for (float v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (float v : values) sq += (v - mean) * (v - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(values.size()));
  if (stddev < 1e-8) {
    std::fill(values.begin(), values.end(), 0.0f);
    return;
  }
  for (float& v : values) v = static_cast<float>((v - mean) / stddev);
}

Patch zscore_normalize(Patch patch) {
  zscore_normalize_inplace(patch.data);
  return patch;
}

Patch crop_patch(const Volume3D& vol, const Index3& center, int size) {
  Patch p;
  p.size = size;
  p.center = center;
  p.pad_count = crop_into(vol, center, size, p.data);
  return p;
}

std::vector<std::uint8_t> crop_mask(const MaskVolume& mask, const Index3& center, int size) {
  std::vector<std::uint8_t> out;
  crop_into(mask, center, size, out);
  return out;
}

Patch axial_flip(const Patch& patch) {
  Patch out = patch;
  const int n = patch.size;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) out(x, y, z) = patch(n - 1 - x, y, z);
    }
  }
  return out;
}

Volume3D axial_flip(const Volume3D& vol) { return flip_grid(vol); }
MaskVolume axial_flip(const MaskVolume& mask) { return flip_grid(mask); }

}  // namespace cowbif
