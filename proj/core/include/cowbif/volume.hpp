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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cowbif/error.hpp"

namespace cowbif {

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend auto operator<=>(const Index3&, const Index3&) = default;
};

struct Dims3 {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  bool contains(const Index3& p) const {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < nx && p.y < ny && p.z < nz;
  }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

// Millimetres per voxel along each axis.
struct Spacing3 {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

// Dense scalar voxel grid. Storage is x-fastest: index = (z*ny + y)*nx + x.
//
// Axis convention, fixed for the whole library:
//   axis 0 (x): patient left -> right
//   axis 1 (y): posterior -> anterior
//   axis 2 (z): inferior -> superior (slice axis)
template <typename T>
class Grid {
 public:
  static constexpr std::string_view kAxisConvention =
      "axis0=left->right, axis1=posterior->anterior, axis2=inferior->superior";

  Grid() = default;
  Grid(Dims3 dims, Spacing3 spacing, T fill = T{});
  Grid(Dims3 dims, Spacing3 spacing, std::vector<T> data);

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_.ny) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims_.nx) +
           static_cast<std::size_t>(x);
  }
  std::size_t index(const Index3& p) const { return index(p.x, p.y, p.z); }
  Index3 coords(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims_.nx);
    const auto ny = static_cast<std::size_t>(dims_.ny);
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny),
            static_cast<int>(i / (nx * ny))};
  }

  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator()(const Index3& p) { return data_[index(p)]; }
  const T& operator()(const Index3& p) const { return data_[index(p)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  template <typename U>
  bool same_geometry(const Grid<U>& other) const {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Dims3 dims_{};
  Spacing3 spacing_{};
  std::vector<T> data_;
};

using Volume3D = Grid<float>;
using MaskVolume = Grid<std::uint8_t>;

extern template class Grid<float>;
extern template class Grid<std::uint8_t>;

// Fixed-size cubic crop. data holds size^3 samples, x-fastest, and covers
// the window [center - size/2, center + size/2 - 1] on every axis.
struct Patch {
  int size = 0;
  Index3 center{};
  std::vector<float> data;
  int pad_count = 0;

  float& operator()(int x, int y, int z) {
    return data[(static_cast<std::size_t>(z) * size + y) * size + x];
  }
  float operator()(int x, int y, int z) const {
    return data[(static_cast<std::size_t>(z) * size + y) * size + x];
  }
  friend bool operator==(const Patch&, const Patch&) = default;
};

enum class Interpolation { kTrilinear, kNearest };

// Throws InvalidArgument unless every spacing is finite and > 0.
void validate_spacing(const Spacing3& spacing);
// Throws InvalidArgument if any sample is non-finite.
void validate_finite(const Volume3D& vol);
bool is_binary(const MaskVolume& mask);

// Resamples onto a grid with the given spacing; output dims are
// round(n * s / t), at least 1. Voxel centres are aligned so that equal
// spacing is the identity.
Volume3D resample(const Volume3D& vol, const Spacing3& target, Interpolation mode);
// Masks only support nearest-neighbour; kTrilinear is rejected.
MaskVolume resample(const MaskVolume& mask, const Spacing3& target,
                    Interpolation mode = Interpolation::kNearest);

// Mean 0 / population std 1. A patch whose std is below 1e-8 becomes zeros.
Patch zscore_normalize(Patch patch);
void zscore_normalize_inplace(std::span<float> values);

Patch crop_patch(const Volume3D& vol, const Index3& center, int size);
// Same windowing as crop_patch for masks; returns size^3 values.
std::vector<std::uint8_t> crop_mask(const MaskVolume& mask, const Index3& center, int size);

// Mirrors axis 0 (left <-> right). Geometry is unchanged.
Patch axial_flip(const Patch& patch);
Volume3D axial_flip(const Volume3D& vol);
MaskVolume axial_flip(const MaskVolume& mask);

}  // namespace cowbif
