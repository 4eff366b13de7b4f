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

#include <cstdint>
#include <filesystem>
#include <string>

#include "cowbif/nn/layers.hpp"

namespace cowbif::nn {

// Binary layout, little-endian throughout:
//
//   char[8]  magic "CWBFCKPT"
//   u32      format version (kCheckpointVersion)
//   u64      epoch
//   u64      seed
//   u32 len, bytes   architecture description (JSON text)
//   u32      layer count
//   per layer:
//     u32 len, bytes  kind          u32 len, bytes  name
//     u32 count, i64[count]         hyperparameters
//     u32 count, per tensor:
//       u32 len, bytes name, u32 rank, i64[rank] dims, f32[prod(dims)] values
//
// Tensors per layer are the parameters followed by the buffers (batch-norm
// running statistics), in the order the layer reports them.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string architecture;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Module<T>& model, const CheckpointMeta& meta);

// Loads into an already-built model. Throws FormatError on bad magic,
// version or truncation, and ShapeError naming the first layer whose kind,
// hyperparameters or tensor shapes disagree.
template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Module<T>& model);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace cowbif::nn
