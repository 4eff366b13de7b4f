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
#include <vector>

#include "cowbif/volume.hpp"

namespace cowbif::skel {

struct Skeleton {
  Dims3 dims;
  Spacing3 spacing;
  std::vector<Index3> voxels;  // sorted by linear index

  MaskVolume to_mask() const;
};

// 3x3x3 neighbourhood, index (dz+1)*9 + (dy+1)*3 + (dx+1); 13 is the centre.
using Neighborhood = std::array<bool, 27>;

// A foreground voxel is simple when removing it changes neither the number
// of 26-connected object components in its 26-neighbourhood (must be exactly
// one) nor the number of 6-connected background components of its
// 18-neighbourhood that touch it face-wise (must be exactly one). This is the
// local characterisation of topology preservation, so the Euler
// characteristic is preserved as well.
bool is_simple_point(const Neighborhood& n);

// Topology-preserving thinning by directional border peeling. Each pass
// collects border voxels in one of six face directions that are neither line
// endpoints nor non-simple, then removes them one by one, re-testing each
// against the current image. Passes repeat until a full round removes
// nothing. Throws InvalidArgument on a non-binary mask.
Skeleton skeletonize(const MaskVolume& mask);

enum class Connectivity { k6 = 6, k18 = 18, k26 = 26 };

// Connected components of the non-zero voxels.
int count_components(const MaskVolume& mask, Connectivity connectivity);
// Per-voxel component label (0 = background, 1..n).
std::vector<int> label_components(const MaskVolume& mask, Connectivity connectivity, int* count);

// Number of 26-neighbours of each skeleton voxel, 0 for background.
int neighbor_count(const MaskVolume& mask, const Index3& p);

}  // namespace cowbif::skel
