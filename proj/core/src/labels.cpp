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

#include "cowbif/labels.hpp"

namespace cowbif {

namespace {
constexpr std::array<std::string_view, kNumClasses> kNames{
    "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "BoNI"};
}

Label swap_left_right(Label l) {
  switch (l) {
    case Label::K:
    case Label::BoNI:
      return l;
    case Label::L:
      return Label::M;
    case Label::M:
      return Label::L;
    default: {
      // A..J come in (even, odd) pairs.
      const int i = to_index(l);
      return from_index(i % 2 == 0 ? i + 1 : i - 1);
    }
  }
}

int swap_left_right(int class_index) { return to_index(swap_left_right(from_index(class_index))); }

std::string_view label_name(Label l) { return kNames[static_cast<std::size_t>(to_index(l))]; }

std::optional<Label> parse_label(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kNames[static_cast<std::size_t>(i)] == name) return from_index(i);
  }
  return std::nullopt;
}

}  // namespace cowbif
