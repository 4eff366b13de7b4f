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

#include "cowbif/volume.hpp"

namespace cowbif {

// Minimal single-file NIfTI-1 support: 348-byte header, magic "n+1",
// little-endian, datatype 16 (float32) or 2 (uint8), dims and pixdim only.
// Paths ending in ".gz" are gzip-compressed transparently.
//
// Errors (FormatError) name the offending header field.

void write_nifti(const std::filesystem::path& path, const Volume3D& vol);
void write_nifti(const std::filesystem::path& path, const MaskVolume& mask);

// Reads either payload type; uint8 samples are widened to float.
Volume3D read_volume(const std::filesystem::path& path);
// Reads either payload type; every sample must be exactly 0 or 1.
MaskVolume read_mask(const std::filesystem::path& path);

}  // namespace cowbif
