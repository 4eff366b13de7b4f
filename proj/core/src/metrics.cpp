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

#include "cowbif/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace cowbif {

namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

void check_class(int c, const char* what) {
  if (c < 0 || c >= kNumClasses) {
    throw InvalidArgument(std::string(what) + " class index " + std::to_string(c) + " outside [0, 14)");
  }
}

}  // namespace

ClassificationReport classification_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("classification_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                          std::to_string(labels.size()) + " labels");
  }
  ClassificationReport r;
  r.total = static_cast<std::int64_t>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_class(labels[i], "label");
    check_class(predictions[i], "prediction");
    r.confusion[labels[i]][predictions[i]] += 1;
  }
  std::int64_t trace = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    ClassMetrics& m = r.per_class[c];
    trace += r.confusion[c][c];
    m.tp = r.confusion[c][c];
    for (int o = 0; o < kNumClasses; ++o) {
      m.support += r.confusion[c][o];
      if (o != c) {
        m.fn += r.confusion[c][o];
        m.fp += r.confusion[o][c];
      }
    }
    m.tn = r.total - m.tp - m.fp - m.fn;
    m.tpr = ratio(m.tp, m.tp + m.fn);
    m.fpr = ratio(m.fp, m.fp + m.tn);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.accuracy = ratio(m.tp + m.tn, r.total);
    // F1 is only reported for classes that occur in the labels.
    if (m.support > 0) m.f1 = ratio(2.0 * m.tp, 2.0 * m.tp + m.fp + m.fn);
  }
  r.accuracy = ratio(trace, r.total);
  double f1_sum = 0.0;
  int f1_n = 0;
  for (int c = 0; c < kNumBoi; ++c) {
    if (r.per_class[c].f1) {
      f1_sum += *r.per_class[c].f1;
      ++f1_n;
    }
  }
  if (f1_n > 0) r.macro_f1 = f1_sum / f1_n;
  return r;
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw InvalidArgument("binary_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double p_total = 0, n_total = 0;
  for (auto v : positive) (v ? p_total : n_total) += 1;
  if (p_total == 0 || n_total == 0) return std::nullopt;
  double tp = 0, fp = 0, prev_tpr = 0, prev_fpr = 0, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const double tpr = tp / p_total, fpr = fp / n_total;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

AucReport roc_auc(std::span<const std::array<double, kNumClasses>> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("roc_auc: scores and labels differ in length");
  AucReport r;
  std::vector<double> s(scores.size());
  std::vector<std::uint8_t> pos(scores.size());
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      check_class(labels[i], "label");
      s[i] = scores[i][c];
      pos[i] = labels[i] == c;
    }
    r.per_class[c] = binary_auc(s, pos);
    if (r.per_class[c]) {
      sum += *r.per_class[c];
      ++n;
    }
  }
  if (n > 0) r.macro = sum / n;
  return r;
}

// ------------------------------------------------------------ segmentation

std::vector<Index3> surface_voxels(const MaskVolume& mask) {
  const Dims3 d = mask.dims();
  std::vector<Index3> out;
  static constexpr int kFaces[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!mask(x, y, z)) continue;
        for (const auto& f : kFaces) {
          const Index3 q{x + f[0], y + f[1], z + f[2]};
          if (!d.contains(q) || !mask(q)) {
            out.push_back({x, y, z});
            break;
          }
        }
      }
    }
  }
  return out;
}

namespace {

// 1D squared distance transform of sampled function f (lower envelope of
// parabolas).
void edt_1d(const double* f, double* out, int n, std::vector<int>& v, std::vector<double>& zb) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (k >= 0) {
      const int p = v[k];
      const double s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= zb[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    zb[k] = k == 0 ? -kInf
                   : ((f[q] + double(q) * q) - (f[v[k - 1]] + double(v[k - 1]) * v[k - 1])) / (2.0 * (q - v[k - 1]));
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (j < k && zb[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const MaskVolume& features) {
  const Dims3 d = features.dims();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g(features.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = features.data()[i] ? 0.0 : kInf;
  const int longest = std::max({d.nx, d.ny, d.nz});
  std::vector<double> line(longest), out(longest), zb(longest + 1);
  std::vector<int> v(longest);
  auto pass = [&](int n, int count_a, int count_b, auto index) {
    for (int a = 0; a < count_a; ++a) {
      for (int b = 0; b < count_b; ++b) {
        for (int i = 0; i < n; ++i) line[i] = g[index(i, a, b)];
        edt_1d(line.data(), out.data(), n, v, zb);
        for (int i = 0; i < n; ++i) g[index(i, a, b)] = out[i];
      }
    }
  };
  pass(d.nx, d.ny, d.nz, [&](int i, int a, int b) { return features.index(i, a, b); });
  pass(d.ny, d.nx, d.nz, [&](int i, int a, int b) { return features.index(a, i, b); });
  pass(d.nz, d.nx, d.ny, [&](int i, int a, int b) { return features.index(a, b, i); });
  return g;
}

namespace {

double directed_hd95(const std::vector<Index3>& from, const MaskVolume& to_surface_mask) {
  const std::vector<double> dt = squared_distance_transform(to_surface_mask);
  std::vector<double> d;
  d.reserve(from.size());
  for (const auto& p : from) d.push_back(std::sqrt(dt[to_surface_mask.index(p)]));
  std::sort(d.begin(), d.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(d.size())));
  return d[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

SegmentationReport segmentation_metrics(const MaskVolume& pred, const MaskVolume& truth) {
  if (!pred.same_geometry(truth)) throw InvalidArgument("segmentation_metrics: masks differ in geometry");
  std::int64_t np = 0, nt = 0, inter = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] != 0, t = truth.data()[i] != 0;
    np += p;
    nt += t;
    inter += p && t;
  }
  SegmentationReport r;
  if (np == 0 && nt == 0) {
    r.dsc = 1.0;
    r.hd95 = 0.0;
    return r;
  }
  r.dsc = 2.0 * inter / static_cast<double>(np + nt);
  r.precision = ratio(inter, np);
  r.recall = ratio(inter, nt);
  if (np == 0 || nt == 0) {
    r.hd95 = std::numeric_limits<double>::infinity();
    return r;
  }
  const auto sp = surface_voxels(pred);
  const auto st = surface_voxels(truth);
  MaskVolume sp_mask(pred.dims(), pred.spacing(), 0), st_mask(truth.dims(), truth.spacing(), 0);
  for (const auto& p : sp) sp_mask(p) = 1;
  for (const auto& p : st) st_mask(p) = 1;
  r.hd95 = std::max(directed_hd95(sp, st_mask), directed_hd95(st, sp_mask));
  return r;
}

void write_classification_csv(const std::string& path, const ClassificationReport& report, const AucReport* auc) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write metrics '" + path + "'");
  out.precision(9);
  auto opt = [&](const std::optional<double>& v) {
    if (v) {
      out << *v;
    } else {
      out << "NA";
    }
  };
  out << "class,support,tp,fp,tn,fn,tpr,fpr,precision,accuracy,f1,auc\n";
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassMetrics& m = report.per_class[c];
    out << label_name(from_index(c)) << ',' << m.support << ',' << m.tp << ',' << m.fp << ',' << m.tn << ','
        << m.fn << ',';
    opt(m.tpr);
    out << ',';
    opt(m.fpr);
    out << ',';
    opt(m.precision);
    out << ',';
    opt(m.accuracy);
    out << ',';
    opt(m.f1);
    out << ',';
    opt(auc ? auc->per_class[c] : std::nullopt);
    out << '\n';
  }
  out << "overall," << report.total << ",,,,,,,,";
  opt(report.accuracy);
  out << ',';
  opt(report.macro_f1);
  out << ',';
  opt(auc ? auc->macro : std::nullopt);
  out << '\n';
}

}  // namespace cowbif
