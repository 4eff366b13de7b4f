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

// Acceptance gates. Each criterion prints exactly one PASS or FAIL line;
// supplementary measurements print as INFO and never decide the outcome.

#include <zlib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cowbif/config.hpp"
#include "cowbif/dataset.hpp"
#include "cowbif/experiment.hpp"
#include "cowbif/graph.hpp"
#include "cowbif/metrics.hpp"
#include "cowbif/models.hpp"
#include "cowbif/nn/layers.hpp"
#include "cowbif/nn/losses.hpp"
#include "cowbif/nn/optim.hpp"
#include "cowbif/phantom.hpp"
#include "cowbif/pipeline.hpp"
#include "cowbif/recognition.hpp"
#include "cowbif/skeleton.hpp"
#include "cowbif/volume.hpp"
#include "oracles.hpp"
#include "shapes.hpp"

namespace fs = std::filesystem;
using namespace cowbif;
using cowbif::testing::P3;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> info;
};

struct Options {
  bool full_e2e = false;
  bool demo = true;
  bool print_digests = false;
  bool verbose = false;
  fs::path work_dir = fs::temp_directory_path() / "cowbif_acceptance";
};

// ---------------------------------------------------------------------------
// 1. Gradients
// ---------------------------------------------------------------------------

using TensorD = nn::Tensor<double>;

TensorD random_tensor(const nn::Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  TensorD t(shape);
  for (double& v : t.values()) v = g(rng);
  return t;
}

void randomize_parameters(nn::Module<double>& m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto* p : m.parameters()) {
    for (double& v : p->value.values()) v = g(rng);
  }
}

struct GradientTally {
  int checks = 0;
  int failures = 0;
  double worst = 0.0;
  std::map<std::string, int> per_kind;
  std::string worst_case;

  void record(const std::string& kind, double err) {
    ++checks;
    ++per_kind[kind];
    if (!(err < 1e-4)) ++failures;
    if (!(err <= worst)) {
      worst = err;
      worst_case = kind;
    }
  }
};

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  constexpr int kShapes = 20;
  std::mt19937_64 rng(20260101);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  GradientTally tally;

  auto run = [&](const std::string& kind, nn::Module<double>& m, TensorD x, nn::Mode mode) {
    const auto r = cowbif::testing::check_module_gradients(m, std::move(x), mode, rng);
    tally.record(kind, r.worst());
  };

  for (int i = 0; i < kShapes; ++i) {
    const int k = pick(0, 1) ? 3 : 1;
    const int stride = pick(1, 2);
    const int pad = pick(0, 1) ? k / 2 : 0;
    const int cin = pick(1, 3), cout = pick(1, 3);
    nn::Conv3d<double> conv("conv", cin, cout, k, stride, pad);
    randomize_parameters(conv, rng);
    run("conv3d", conv, random_tensor({pick(1, 2), cin, pick(3, 6), pick(3, 6), pick(3, 6)}, rng), nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    const int c = pick(1, 3);
    nn::BatchNorm3d<double> bn("bn", c);
    randomize_parameters(bn, rng);
    run("batchnorm3d", bn, random_tensor({pick(1, 3), c, pick(2, 4), pick(2, 4), pick(2, 4)}, rng, 2.0),
        nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::ReLU<double> relu("relu");
    TensorD x = random_tensor({pick(1, 3), pick(1, 3), pick(1, 5), pick(1, 5), pick(1, 5)}, rng);
    // Keep samples clear of the kink so the central difference is defined.
    for (double& v : x.values()) {
      if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
    }
    run("relu", relu, std::move(x), nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::Sigmoid<double> sig("sigmoid");
    run("sigmoid", sig, random_tensor({pick(1, 3), pick(1, 3), pick(1, 5), pick(1, 5), pick(1, 5)}, rng, 3.0),
        nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::Softmax<double> sm("softmax");
    run("softmax", sm, random_tensor({pick(1, 6), pick(2, 14)}, rng, 2.0), nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::MaxPool3d<double> pool("pool");
    run("maxpool3d", pool,
        random_tensor({pick(1, 2), pick(1, 3), 2 * pick(1, 3), 2 * pick(1, 3), 2 * pick(1, 3)}, rng),
        nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::Upsample3d<double> up("up");
    run("upsample3d", up, random_tensor({pick(1, 2), pick(1, 3), pick(1, 3), pick(1, 3), pick(1, 3)}, rng),
        nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::Flatten<double> flat("flatten");
    run("flatten", flat, random_tensor({pick(1, 3), pick(1, 3), pick(1, 4), pick(1, 4), pick(1, 4)}, rng),
        nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    const int in = pick(1, 24), out = pick(1, 24);
    nn::Dense<double> dense("dense", in, out);
    randomize_parameters(dense, rng);
    run("dense", dense, random_tensor({pick(1, 4), in}, rng), nn::Mode::kTrain);
  }
  for (int i = 0; i < kShapes; ++i) {
    nn::Dropout<double> drop("dropout", std::uniform_real_distribution<double>(0.1, 0.7)(rng), rng());
    TensorD x = random_tensor({pick(1, 4), pick(1, 32)}, rng);
    drop.forward(x, nn::Mode::kTrain);
    drop.freeze_mask(true);
    run("dropout", drop, std::move(x), nn::Mode::kTrain);
  }
  // Skip concatenation and the encoder/decoder wiring only exist inside the U-Net.
  for (int i = 0; i < kShapes; ++i) {
    UNetConfig cfg;
    cfg.levels = pick(1, 2);
    cfg.base_width = pick(1, 2);
    cfg.input_size = 4;
    auto unet = build_unet<double>(cfg, rng());
    randomize_parameters(*unet, rng);
    run("unet", *unet, random_tensor({1, 1, 4, 4, 4}, rng), nn::Mode::kTrain);
  }

  for (int i = 0; i < kShapes; ++i) {
    const int n = pick(1, 5), k = pick(2, 14);
    TensorD probs({n, k});
    TensorD onehot({n, k}, 0.0);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int c = 0; c < k; ++c) s += probs[r * k + c] = u(rng);
      for (int c = 0; c < k; ++c) probs[r * k + c] /= s;
      onehot[r * k + pick(0, k - 1)] = 1.0;
    }
    const double err = cowbif::testing::check_loss_gradient(
        [&](const TensorD& p) { return nn::cross_entropy(p, onehot); }, probs);
    tally.record("cross_entropy", err);
  }
  for (int i = 0; i < kShapes; ++i) {
    const nn::Shape shape{pick(1, 2), 1, pick(1, 5), pick(1, 5), pick(1, 5)};
    TensorD pred(shape), target(shape);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      pred[j] = u(rng);
      target[j] = pick(0, 1);
    }
    const double smooth = pick(0, 1) ? 1.0 : 0.5;
    const double err = cowbif::testing::check_loss_gradient(
        [&](const TensorD& p) { return nn::dice_loss(p, target, smooth); }, pred);
    tally.record("dice", err);
  }

  const double secs = seconds_since(t0);
  Outcome o;
  int min_per_kind = kShapes;
  for (const auto& [kind, n] : tally.per_kind) min_per_kind = std::min(min_per_kind, n);
  o.pass = tally.failures == 0 && min_per_kind >= 20 && secs < 300.0;
  o.detail = fmt::format("{} checks over {} modules/losses (>= {} shapes each), {} above 1e-4, "
                         "max rel err {:.2e} ({}), {:.1f} s (limit 300 s)",
                         tally.checks, tally.per_kind.size(), min_per_kind, tally.failures, tally.worst,
                         tally.worst_case, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Skeleton topology
// ---------------------------------------------------------------------------

MaskVolume two_tubes(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> radius(1.5, 3.0), offset(-3.0, 3.0);
  MaskVolume m = cowbif::testing::empty_mask(56);
  cowbif::testing::paint_capsule(m, {10, 14 + offset(rng), 28}, {46, 14 + offset(rng), 28 + offset(rng)},
                                 radius(rng));
  cowbif::testing::paint_capsule(m, {28 + offset(rng), 42, 8}, {28 + offset(rng), 42, 48}, radius(rng));
  return m;
}

Outcome criterion_skeleton() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7331);
  struct Shape {
    std::string kind;
    std::function<MaskVolume()> make;
    int count;
  };
  const std::vector<Shape> shapes{
      {"tube", [&] { return cowbif::testing::random_tube(rng); }, 20},
      {"y", [&] { return cowbif::testing::random_y(rng); }, 20},
      {"torus", [&] { return cowbif::testing::random_torus(rng); }, 10},
      {"loop+stub", [&] { return cowbif::testing::loop_with_stub(rng); }, 10},
      {"two tubes", [&] { return two_tubes(rng); }, 5},
  };
  int total = 0, topo_fail = 0, idem_fail = 0, ys = 0, census_fail = 0;
  std::vector<std::string> notes;
  for (const auto& s : shapes) {
    for (int i = 0; i < s.count; ++i, ++total) {
      const MaskVolume mask = s.make();
      const skel::Skeleton sk = skel::skeletonize(mask);
      const MaskVolume thin = sk.to_mask();
      const int before = skel::count_components(mask, skel::Connectivity::k26);
      const int after = skel::count_components(thin, skel::Connectivity::k26);
      if (before != after) {
        ++topo_fail;
        notes.push_back(fmt::format("{} #{}: components {} -> {}", s.kind, i, before, after));
      }
      const skel::Skeleton again = skel::skeletonize(thin);
      if (again.voxels != sk.voxels) {
        ++idem_fail;
        notes.push_back(fmt::format("{} #{}: not idempotent", s.kind, i));
      }
      if (s.kind == "y") {
        ++ys;
        const skel::VesselGraph g = skel::prune_spurs(skel::build_graph(sk));
        const int j = g.count(skel::NodeKind::kJunction), e = g.count(skel::NodeKind::kEndpoint);
        if (j != 1 || e != 3) {
          ++census_fail;
          notes.push_back(fmt::format("y #{}: {} junctions, {} endpoints", i, j, e));
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = total >= 50 && topo_fail == 0 && idem_fail == 0 && census_fail == 0 && secs < 120.0;
  o.detail = fmt::format("{} masks: component count changed on {}, non-idempotent {}, Y census after default spur pruning wrong {}/{}, "
                         "{:.1f} s (limit 120 s)",
                         total, topo_fail, idem_fail, census_fail, ys, secs);
  o.info = std::move(notes);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Metric oracles
// ---------------------------------------------------------------------------

Outcome criterion_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(424242);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  constexpr int kSets = 1000;
  int count_mismatch = 0, auc_mismatch = 0, defined_aucs = 0;
  double worst_auc = 0.0;

  for (int set = 0; set < kSets; ++set) {
    const int n = pick(1, 160);
    const int classes_used = pick(1, kNumClasses);
    const bool ties = pick(0, 2) == 0;
    std::vector<int> labels(static_cast<std::size_t>(n)), preds(labels.size());
    std::vector<std::array<double, kNumClasses>> scores(labels.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      labels[i] = pick(0, classes_used - 1);
      double s = 0.0;
      for (double& v : scores[i]) {
        v = ties ? std::round(u(rng) * 5.0) / 5.0 + 1e-3 : u(rng);
        s += v;
      }
      for (double& v : scores[i]) v /= s;
      preds[i] = pick(0, 3) == 0 ? pick(0, kNumClasses - 1)
                                 : static_cast<int>(std::max_element(scores[i].begin(), scores[i].end()) -
                                                    scores[i].begin());
    }

    const ClassificationReport rep = classification_metrics(preds, labels);
    bool ok = rep.total == n;
    std::int64_t trace = 0;
    for (int t = 0; t < kNumClasses; ++t) {
      for (int p = 0; p < kNumClasses; ++p) {
        std::int64_t direct = 0;
        for (int i = 0; i < n; ++i) direct += labels[i] == t && preds[i] == p;
        ok = ok && rep.confusion[t][p] == direct;
      }
      const auto b = cowbif::testing::brute_counts(preds, labels, t);
      const ClassMetrics& m = rep.per_class[t];
      ok = ok && m.tp == b.tp && m.fp == b.fp && m.tn == b.tn && m.fn == b.fn && m.support == b.tp + b.fn;
      trace += b.tp;
    }
    ok = ok && rep.accuracy.has_value() && *rep.accuracy == static_cast<double>(trace) / n;
    if (!ok) ++count_mismatch;

    const AucReport auc = roc_auc(scores, labels);
    for (int c = 0; c < kNumClasses; ++c) {
      std::vector<double> col(labels.size());
      std::vector<std::uint8_t> pos(labels.size());
      for (int i = 0; i < n; ++i) {
        col[i] = scores[i][c];
        pos[i] = labels[i] == c;
      }
      const auto ref = cowbif::testing::threshold_enumeration_auc(col, pos);
      const auto got = auc.per_class[c];
      if (ref.has_value() != got.has_value()) {
        ++auc_mismatch;
        continue;
      }
      if (!ref) continue;
      ++defined_aucs;
      const double err = std::abs(*ref - *got);
      worst_auc = std::max(worst_auc, err);
      if (err > 1e-9) ++auc_mismatch;
    }
  }

  std::mt19937_64 mc(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr int kMc = 10000;
  std::vector<double> s(kMc);
  std::vector<std::uint8_t> p(kMc);
  for (int i = 0; i < kMc; ++i) {
    s[i] = u(mc);
    p[i] = u(mc) < 0.5;
  }
  const double random_auc = binary_auc(s, p).value_or(-1.0);
  const bool mc_ok = std::abs(random_auc - 0.5) <= 0.02;

  Outcome o;
  o.pass = count_mismatch == 0 && auc_mismatch == 0 && mc_ok;
  o.detail = fmt::format("{} sets: count mismatches {}, AUC mismatches {} of {} defined (max |diff| {:.1e}); "
                         "random-score AUC at n=10000 = {:.4f}; {:.1f} s",
                         kSets, count_mismatch, auc_mismatch, defined_aucs, worst_auc, random_auc,
                         seconds_since(t0));
  return o;
}

// ---------------------------------------------------------------------------
// 4. Volume geometry
// ---------------------------------------------------------------------------

Outcome criterion_geometry() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(8080);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr int kCases = 10000;
  std::map<std::string, int> failures;
  double worst_z = 0.0, worst_const = 0.0;

  for (int c = 0; c < kCases; ++c) {
    const Dims3 d{pick(1, 14), pick(1, 14), pick(1, 14)};
    const Spacing3 sp{0.2 + u(rng), 0.2 + u(rng), 0.2 + u(rng)};
    Volume3D vol(d, sp);
    for (float& v : vol.values()) v = static_cast<float>(u(rng) * 4.0 - 1.0);

    // Crop: window arithmetic against a direct scan.
    const Index3 center{pick(0, d.nx - 1), pick(0, d.ny - 1), pick(0, d.nz - 1)};
    const int size = 2 * pick(1, 9);
    const Patch patch = crop_patch(vol, center, size);
    const Patch ones = crop_patch(Volume3D(d, sp, 1.0f), center, size);
    int pads = 0;
    bool crop_ok = static_cast<int>(patch.data.size()) == size * size * size;
    for (int z = 0; z < size && crop_ok; ++z)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const Index3 q{center.x - size / 2 + x, center.y - size / 2 + y, center.z - size / 2 + z};
          const float expect = d.contains(q) ? vol(q) : 0.0f;
          pads += !d.contains(q);
          crop_ok = crop_ok && patch(x, y, z) == expect;
        }
    const double ones_sum = std::accumulate(ones.data.begin(), ones.data.end(), 0.0);
    crop_ok = crop_ok && patch.pad_count == pads && ones.pad_count == pads &&
              ones_sum == static_cast<double>(size * size * size - pads);
    if (!crop_ok) ++failures["crop"];

    // Flip: involution, index mirror, multiset, geometry.
    const Volume3D f = axial_flip(vol);
    bool flip_ok = f.same_geometry(vol) && axial_flip(f) == vol;
    for (int z = 0; z < d.nz && flip_ok; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) flip_ok = flip_ok && f(x, y, z) == vol(d.nx - 1 - x, y, z);
    std::vector<float> a(vol.values()), b(f.values());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    flip_ok = flip_ok && a == b && axial_flip(axial_flip(patch)) == patch;
    if (!flip_ok) ++failures["flip"];

    // Resample: identity, dimension rule, constants in both modes.
    bool rs_ok = resample(vol, sp, Interpolation::kTrilinear) == vol && resample(vol, sp, Interpolation::kNearest) == vol;
    const Spacing3 target{0.2 + u(rng), 0.2 + u(rng), 0.2 + u(rng)};
    const float level = static_cast<float>(u(rng) * 10.0 - 5.0);
    const Volume3D cst(d, sp, level);
    for (auto mode : {Interpolation::kTrilinear, Interpolation::kNearest}) {
      const Volume3D r = resample(cst, target, mode);
      const Dims3 want{std::max(1, static_cast<int>(std::lround(d.nx * sp.sx / target.sx))),
                       std::max(1, static_cast<int>(std::lround(d.ny * sp.sy / target.sy))),
                       std::max(1, static_cast<int>(std::lround(d.nz * sp.sz / target.sz)))};
      rs_ok = rs_ok && r.dims() == want && r.spacing() == target;
      for (float v : r.values()) {
        const double err = std::abs(static_cast<double>(v) - level);
        worst_const = std::max(worst_const, err);
        rs_ok = rs_ok && (mode == Interpolation::kNearest ? v == level : err <= 1e-5);
      }
    }
    const MaskVolume mask(d, sp, 1);
    const MaskVolume mr = resample(mask, target);
    rs_ok = rs_ok && std::all_of(mr.values().begin(), mr.values().end(), [](std::uint8_t v) { return v == 1; });
    if (!rs_ok) ++failures["resample"];

    // Z-score on a random patch and on a constant one.
    Patch zp;
    zp.size = 2 * pick(1, 6);
    zp.data.resize(static_cast<std::size_t>(zp.size) * zp.size * zp.size);
    const double scale = std::pow(10.0, u(rng) * 4.0 - 2.0), offset = u(rng) * 200.0 - 100.0;
    for (float& v : zp.data) v = static_cast<float>(offset + scale * (u(rng) - 0.5));
    const Patch zn = zscore_normalize(zp);
    double mean = 0.0, var = 0.0;
    for (float v : zn.data) mean += v;
    mean /= static_cast<double>(zn.data.size());
    for (float v : zn.data) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(zn.data.size()));
    worst_z = std::max({worst_z, std::abs(mean), std::abs(sd - 1.0)});
    bool z_ok = std::abs(mean) <= 1e-5 && std::abs(sd - 1.0) <= 1e-5;
    Patch flat = zp;
    std::fill(flat.data.begin(), flat.data.end(), level);
    const Patch fz = zscore_normalize(flat);
    z_ok = z_ok && std::all_of(fz.data.begin(), fz.data.end(), [](float v) { return v == 0.0f; });
    if (!z_ok) ++failures["zscore"];
  }

  int total_fail = 0;
  std::string by_kind;
  for (const char* k : {"crop", "flip", "resample", "zscore"}) {
    total_fail += failures[k];
    by_kind += fmt::format("{}{} {}", by_kind.empty() ? "" : ", ", k, failures[k]);
  }
  Outcome o;
  o.pass = total_fail == 0;
  o.detail = fmt::format("{} randomized cases, failures: {}; max z-score stat error {:.1e}, "
                         "max constant-resample error {:.1e}; {:.1f} s",
                         kCases, by_kind, worst_z, worst_const, seconds_since(t0));
  return o;
}

// ---------------------------------------------------------------------------
// 5. Phantom regression
// ---------------------------------------------------------------------------

template <typename T>
std::uint32_t crc_of(const std::vector<T>& v) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(v.size() * sizeof(T))));
}

std::uint32_t crc_of(const std::string& s) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

struct PinnedPhantom {
  std::uint64_t seed;
  std::uint32_t image_crc;
  std::uint32_t mask_crc;
  std::uint32_t manifest_crc;
};

// CRC-32 of the image bytes, mask bytes and manifest line of default-spec
// phantoms. Float generation is libstdc++/x86-64 specific; a different
// standard library or FP contraction setting changes these.
constexpr std::array<PinnedPhantom, 5> kPinned{{
    {11, 0xbf4aeb14u, 0xe672d348u, 0xea9d459fu},
    {2024, 0x296a1aa7u, 0xd01f9a2au, 0xab91c082u},
    {31337, 0x4b66a222u, 0xc718a044u, 0x546f929bu},
    {77, 0x052a8610u, 0x915946ffu, 0xf01f5ef8u},
    {900001, 0x6f2ca91au, 0x01ad384au, 0xc444e7a6u},
}};
constexpr std::uint64_t kPinnedManifestSeed = 515;
constexpr int kPinnedManifestCount = 12;
constexpr std::uint32_t kPinnedManifestCrc = 0x352b07d7u;

constexpr std::uint64_t kProximitySeed = 5;
constexpr int kProximityPhantoms = 200;

Outcome criterion_phantom(const Options& opt) {
  const auto t0 = Clock::now();
  int digest_fail = 0, rerun_fail = 0;
  std::vector<std::string> notes;
  for (const auto& pin : kPinned) {
    phantom::PhantomSpec spec;
    spec.seed = pin.seed;
    const auto a = phantom::generate_phantom(spec);
    const auto b = phantom::generate_phantom(spec);
    phantom::PhantomRecord rec{0, spec, a.flags, a.truth, "", ""};
    const std::uint32_t ic = crc_of(a.image.values()), mc = crc_of(a.mask.values()),
                        lc = crc_of(phantom::to_manifest_line(rec));
    if (opt.print_digests) {
      notes.push_back(fmt::format("{{{}, 0x{:08x}u, 0x{:08x}u, 0x{:08x}u}},", pin.seed, ic, mc, lc));
    }
    if (!(a.image == b.image && a.mask == b.mask && a.truth == b.truth)) ++rerun_fail;
    if (ic != pin.image_crc || mc != pin.mask_crc || lc != pin.manifest_crc) {
      ++digest_fail;
      notes.push_back(fmt::format("seed {}: digests {:08x}/{:08x}/{:08x} differ from pinned", pin.seed, ic, mc, lc));
    }
  }
  {
    const auto recs = phantom::sample_manifest(kPinnedManifestCount, phantom::PhantomSpec{}, kPinnedManifestSeed);
    std::string text;
    for (const auto& r : recs) text += phantom::to_manifest_line(r) + "\n";
    const auto again = phantom::sample_manifest(kPinnedManifestCount, phantom::PhantomSpec{}, kPinnedManifestSeed);
    if (again != recs) ++rerun_fail;
    const std::uint32_t crc = crc_of(text);
    if (opt.print_digests) notes.push_back(fmt::format("manifest 0x{:08x}u", crc));
    if (crc != kPinnedManifestCrc) {
      ++digest_fail;
      notes.push_back(fmt::format("manifest digest {:08x} differs from pinned", crc));
    }
  }

  int phantoms_ok = 0, centres = 0, centres_ok = 0, missing_acom_fail = 0;
  const auto recs = phantom::sample_manifest(kProximityPhantoms, phantom::PhantomSpec{}, kProximitySeed);
  for (const auto& r : recs) {
    const phantom::PhantomCase c = phantom::render(r);
    const auto junctions = skel::candidate_centers(extract_graph(c.mask, 3));
    bool all = true;
    for (const auto& t : r.truth.centers) {
      if (!t) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& j : junctions) best = std::min(best, voxel_distance(j, *t));
      ++centres;
      if (best <= 3.0) {
        ++centres_ok;
      } else {
        all = false;
      }
    }
    phantoms_ok += all;
    missing_acom_fail += !all && r.flags.missing_acom;
  }
  const double share = static_cast<double>(phantoms_ok) / kProximityPhantoms;

  Outcome o;
  o.pass = digest_fail == 0 && rerun_fail == 0 && share >= 0.95;
  o.detail = fmt::format("{} pinned phantoms + manifest: {} digest mismatches, {} rerun mismatches; "
                         "{}/{} default phantoms ({:.1f}%, need >= 95%) have a junction within 3 voxels of "
                         "every GT centre ({}/{} centres); {:.1f} s",
                         kPinned.size(), digest_fail, rerun_fail, phantoms_ok, kProximityPhantoms, 100.0 * share,
                         centres_ok, centres, seconds_since(t0));
  notes.push_back(fmt::format("{} of the {} failing phantoms have a missing ACom (A/B centres with no junction)",
                              missing_acom_fail, kProximityPhantoms - phantoms_ok));
  o.info = std::move(notes);
  return o;
}

// ---------------------------------------------------------------------------
// 6. End-to-end experiment
// ---------------------------------------------------------------------------

PipelineConfig full_experiment_config(const fs::path& dir) {
  PipelineConfig c;
  c.seed = 20260301;
  c.output_dir = dir.string();
  c.dataset.count = 100;
  c.dataset.test_count = 20;
  c.train_unet.epochs = 20;
  c.train_classifier.epochs = 60;
  c.train_classifier.batch_size = 32;
  c.train_classifier.augment = true;
  c.validate();
  return c;
}

// Same pipeline on half-resolution phantoms with narrower networks.
PipelineConfig demo_config(const fs::path& dir) {
  PipelineConfig c;
  c.seed = 20260302;
  c.output_dir = dir.string();
  c.dataset.count = 20;
  c.dataset.test_count = 4;
  c.phantom.dims = {96, 96, 96};
  c.phantom.spacing = {0.8, 0.8, 0.8};
  c.target_spacing = 0.8;
  c.classifier.input_size = 16;
  c.classifier.widths = {16, 32, 64};
  c.classifier.convs_per_block = {1, 1, 1};
  c.classifier.hidden = 128;
  c.assembly.patch_size = 16;
  c.assembly.match_radius = 2.5;
  c.assembly.boni_min_distance = 8.0;
  c.unet.input_size = 32;
  c.unet.base_width = 4;
  c.unet.levels = 3;
  c.segmentation.window = 32;
  c.segmentation.stride = 16;
  c.train_unet.epochs = 20;
  c.train_unet.patches_per_volume = 6;
  c.train_classifier.epochs = 60;
  c.validate();
  return c;
}

// Patches the classifier would see per epoch: every present BoI on the
// training phantoms plus the BoNI share.
double projected_classifier_patches(const PipelineConfig& c) {
  phantom::PhantomSpec base = c.phantom;
  const auto recs = phantom::sample_manifest(c.dataset.count, base, c.seed);
  const auto [train, test] = split_train_test(recs, c.dataset.test_count);
  double boi = 0.0;
  for (const auto& r : train) boi += r.truth.count();
  return boi + c.assembly.boni_ratio * boi / kNumBoi;
}

std::string describe(const ExperimentResult& r, const ExperimentTargets& t) {
  return fmt::format("patch acc {:.3f} (>= {:.2f}), U-Net DSC {:.3f} (>= {:.2f}), rate@16 U-Net {:.3f} (>= {:.2f}), "
                     "expert {:.3f} (>= {:.2f}), {:.2f} h (<= {:.0f} h)",
                     r.patch_accuracy, t.patch_accuracy, r.mean_dsc, t.dsc, r.rate_unet, t.rate_unet, r.rate_expert,
                     t.rate_expert, r.hours, t.budget_hours);
}

Outcome criterion_experiment(const Options& opt) {
  const ExperimentTargets targets;
  Outcome o;
  const Logger log = [&](const std::string& m) {
    if (opt.verbose) std::fprintf(stderr, "%s\n", m.c_str());
  };
  if (opt.full_e2e) {
    const fs::path dir = opt.work_dir / "experiment";
    fs::remove_all(dir);
    const ExperimentResult r = run_experiment(full_experiment_config(dir), log);
    o.pass = r.meets(targets);
    o.detail = "full run: " + describe(r, targets);
    return o;
  }

  const auto t0 = Clock::now();
  const PipelineConfig full = full_experiment_config(opt.work_dir / "experiment");
  const double patches = projected_classifier_patches(full);
  const CostProjection p = project_experiment_cost(full, patches);
  const double hours8 = p.hours_on(8);
  o.pass = false;
  o.detail = fmt::format("not run (pass --full-e2e); measured step cost U-Net {:.2f} s x {:.0f} patches, "
                         "classifier {:.3f} s x {:.0f} patches, inference {:.0f} s -> {:.0f} core-hours, "
                         "{:.0f} h on 8 ideal cores vs {:.0f} h budget",
                         p.unet_step_seconds, p.unet_steps, p.classifier_step_seconds, p.classifier_steps,
                         p.inference_seconds, p.single_core_hours(), hours8, targets.budget_hours);
  o.info.push_back(fmt::format("cost measurement took {:.1f} s", seconds_since(t0)));

  if (opt.demo) {
    const fs::path dir = opt.work_dir / "demo";
    fs::remove_all(dir);
    const ExperimentResult r = run_experiment(demo_config(dir), log);
    o.info.push_back("reduced run (20 phantoms at 0.8 mm, narrow networks, 6 U-Net patches per volume): " +
                     describe(r, targets));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 7. Protocol
// ---------------------------------------------------------------------------

bool monotone(const std::vector<SweepPoint>& sweep) {
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    for (int c = 0; c < kNumBoi; ++c) {
      const auto a = sweep[i - 1].rate(c), b = sweep[i].rate(c);
      if (a.has_value() != b.has_value()) return false;
      if (a && *b < *a) return false;
    }
    const auto a = sweep[i - 1].overall(), b = sweep[i].overall();
    if (a.has_value() != b.has_value() || (a && *b < *a)) return false;
  }
  return true;
}

PatientCandidates random_patient(std::mt19937_64& rng, int id) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PatientCandidates p;
  p.patient = "p" + std::to_string(id);
  for (auto& c : p.truth.centers) {
    if (u(rng) < 0.85) c = Index3{pick(0, 63), pick(0, 63), pick(0, 63)};
  }
  const int n = pick(0, 30);
  for (int i = 0; i < n; ++i) {
    Candidate cand;
    cand.center = {pick(0, 63), pick(0, 63), pick(0, 63)};
    const int near = pick(0, kNumBoi - 1);
    if (p.truth.centers[near] && u(rng) < 0.7) {
      const Index3 t = *p.truth.centers[near];
      cand.center = {std::clamp(t.x + pick(-12, 12), 0, 63), std::clamp(t.y + pick(-12, 12), 0, 63),
                     std::clamp(t.z + pick(-12, 12), 0, 63)};
    }
    double s = 0.0;
    for (double& v : cand.probs) s += v = u(rng);
    for (double& v : cand.probs) v /= s;
    p.candidates.push_back(cand);
  }
  return p;
}

Outcome criterion_protocol() {
  const auto t0 = Clock::now();
  int split_runs = 0, split_fail = 0;
  double worst_dev = 0.0;
  for (int n : {118, 100, 80, 57, 25}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed, ++split_runs) {
      const auto recs = phantom::sample_manifest(n, phantom::PhantomSpec{}, 1000 + seed * 31 + n);
      std::vector<PatientPresence> patients;
      std::map<std::string, std::array<bool, kNumBoi>> presence;
      for (const auto& r : recs) {
        PatientPresence p;
        p.id = "patient" + std::to_string(r.id);
        for (int c = 0; c < kNumBoi; ++c) p.present[c] = r.truth.centers[c].has_value();
        presence[p.id] = p.present;
        patients.push_back(p);
      }
      const FoldSplit split = make_folds(patients, 5, seed);
      bool ok = split.folds.size() == 5;
      std::multiset<std::string> seen;
      for (const auto& f : split.folds) seen.insert(f.begin(), f.end());
      ok = ok && seen.size() == patients.size();
      for (const auto& p : patients) ok = ok && seen.count(p.id) == 1;
      for (int c = 0; c < kNumBoi && ok; ++c) {
        int total = 0;
        for (const auto& p : patients) total += p.present[c];
        for (const auto& f : split.folds) {
          int here = 0;
          for (const auto& id : f) here += presence.at(id)[c];
          const double ideal = static_cast<double>(f.size()) * total / n;
          worst_dev = std::max(worst_dev, std::abs(here - ideal));
          ok = ok && std::abs(here - ideal) <= 1.0;
        }
      }
      if (!ok) ++split_fail;
    }
  }

  int sweep_runs = 0, sweep_fail = 0;
  std::mt19937_64 rng(616);
  for (int run = 0; run < 200; ++run, ++sweep_runs) {
    std::vector<PatientCandidates> pts;
    const int n = std::uniform_int_distribution<int>(1, 12)(rng);
    for (int i = 0; i < n; ++i) pts.push_back(random_patient(rng, i));
    if (!monotone(threshold_sweep(pts, default_sweep_thresholds()))) ++sweep_fail;
  }
  {
    // One pass through the real detector with an untrained classifier.
    PipelineConfig cfg;
    cfg.classifier.widths = {4, 8};
    cfg.classifier.convs_per_block = {1, 1};
    cfg.classifier.hidden = 16;
    auto clf = build_classifier<float>(cfg.classifier, 3);
    std::vector<PatientCandidates> pts;
    for (const auto& r : phantom::sample_manifest(4, phantom::PhantomSpec{}, 88)) {
      const phantom::PhantomCase c = phantom::render(r);
      Detection d = detect(c.image, &c.mask, nullptr, {clf.get()}, cfg);
      pts.push_back({"phantom" + std::to_string(r.id), std::move(d.candidates), r.truth});
    }
    ++sweep_runs;
    if (!monotone(threshold_sweep(pts, default_sweep_thresholds()))) ++sweep_fail;
  }

  Outcome o;
  o.pass = split_fail == 0 && sweep_fail == 0;
  o.detail = fmt::format("{} five-fold splits: {} not disjoint partitions or off by > 1 (max deviation {:.2f}); "
                         "{} sweeps: {} non-monotone; {:.1f} s",
                         split_runs, split_fail, worst_dev, sweep_runs, sweep_fail, seconds_since(t0));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cowbif acceptance gates"};
  Options opt;
  std::vector<int> selected;
  bool no_demo = false;
  app.add_option("-c,--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 7));
  app.add_flag("--full-e2e", opt.full_e2e, "Run the full-scale end-to-end experiment for criterion 6");
  app.add_flag("--no-demo", no_demo, "Skip the reduced end-to-end run reported with criterion 6");
  app.add_flag("--print-digests", opt.print_digests, "Print phantom digests for pinning");
  app.add_option("--work-dir", opt.work_dir, "Scratch directory for criterion 6");
  app.add_flag("-v,--verbose", opt.verbose, "Log pipeline progress to stderr");
  CLI11_PARSE(app, argc, argv);
  opt.demo = !no_demo;
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7};

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> gates{
      {1, {"gradient suite", criterion_gradients}},
      {2, {"skeleton topology", criterion_skeleton}},
      {3, {"metric oracles", criterion_metrics}},
      {4, {"volume geometry", criterion_geometry}},
      {5, {"phantom regression", [&] { return criterion_phantom(opt); }}},
      {6, {"end-to-end experiment", [&] { return criterion_experiment(opt); }}},
      {7, {"protocol", criterion_protocol}},
  };

  int failed = 0;
  for (int id : selected) {
    const auto& [name, fn] = gates.at(id);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    for (const auto& line : o.info) std::printf("INFO criterion %d: %s\n", id, line.c_str());
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
