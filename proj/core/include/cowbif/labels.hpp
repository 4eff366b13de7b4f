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
#include <optional>
#include <string_view>

namespace cowbif {

// The 13 bifurcations of interest plus the background-bifurcation class.
//
//   A/B  ACA-A1 x ACA-A2 (with ACom)      C/D  ICA terminus -> ACA-A1 + MCA-M1
//   E/F  MCA M1 -> M2 split                G/H  ICA x PCom
//   I/J  ICA x ophthalmic artery           K    basilar apex -> PCA-P1 pair
//   L/M  vertebral artery x PICA           BoNI any other junction
//
// The first letter of each pair sits on the patient's left (low x).
enum class Label : int { A = 0, B, C, D, E, F, G, H, I, J, K, L, M, BoNI };

inline constexpr int kNumClasses = 14;
inline constexpr int kNumBoi = 13;

inline constexpr std::array<Label, kNumBoi> kBoiLabels{
    Label::A, Label::B, Label::C, Label::D, Label::E, Label::F, Label::G,
    Label::H, Label::I, Label::J, Label::K, Label::L, Label::M};

constexpr int to_index(Label l) { return static_cast<int>(l); }
constexpr Label from_index(int i) { return static_cast<Label>(i); }

// Left/right mirror: A<->B, C<->D, E<->F, G<->H, I<->J, L<->M; K and BoNI fixed.
Label swap_left_right(Label l);
int swap_left_right(int class_index);

std::string_view label_name(Label l);
std::optional<Label> parse_label(std::string_view name);

}  // namespace cowbif
