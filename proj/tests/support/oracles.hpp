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

// Brute-force reference implementations, deliberately written without the
// library's code paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cowbif/labels.hpp"
#include "cowbif/nn/layers.hpp"
#include "cowbif/nn/losses.hpp"

namespace cowbif::testing {

struct BruteCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// One-vs-rest counts by scanning every sample.
inline BruteCounts brute_counts(std::span<const int> pred, std::span<const int> truth, int c) {
  BruteCounts k;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == c, t = truth[i] == c;
    if (p && t) ++k.tp;
    if (p && !t) ++k.fp;
    if (!p && t) ++k.fn;
    if (!p && !t) ++k.tn;
  }
  return k;
}

// Probability that a random positive outscores a random negative, ties
// counting one half: the exact trapezoidal ROC area.
inline std::optional<double> pairwise_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

// Area under the polyline through (FPR, TPR) at every threshold "score >= t",
// t running over all distinct scores from high to low.
inline std::optional<double> threshold_enumeration_auc(std::span<const double> scores,
                                                       std::span<const std::uint8_t> positive) {
  std::vector<double> ts(scores.begin(), scores.end());
  std::sort(ts.begin(), ts.end(), std::greater<>());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  double P = 0, N = 0;
  for (auto p : positive) (p ? P : N) += 1;
  if (P == 0 || N == 0) return std::nullopt;
  double area = 0.0, fx = 0.0, fy = 0.0;
  for (double t : ts) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (positive[i] ? tp : fp) += 1;
    }
    const double x = fp / N, y = tp / P;
    area += (x - fx) * (y + fy) / 2.0;
    fx = x;
    fy = y;
  }
  return area;
}

struct GradCheck {
  double input_error = 0.0;
  double param_error = 0.0;
  double worst() const { return std::max(input_error, param_error); }
};

// The 1e-6 floor keeps an all-zero gradient from comparing rounding noise
// against rounding noise.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, a = 0.0, n = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    a += analytic[i] * analytic[i];
    n += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(a), std::sqrt(n), 1e-6});
  return std::sqrt(diff) / scale;
}

// Central differences of L = sum(forward(x) * weights) with respect to the
// input and every parameter, compared to the module's backward pass.
inline GradCheck check_module_gradients(nn::Module<double>& m, nn::Tensor<double> x, nn::Mode mode,
                                        std::mt19937_64& rng, double h = 1e-5) {
  std::normal_distribution<double> g(0.0, 1.0);
  nn::Tensor<double> y = m.forward(x, mode);
  nn::Tensor<double> w(y.shape());
  for (double& v : w.values()) v = g(rng);
  auto loss = [&]() {
    const nn::Tensor<double> out = m.forward(x, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
  };
  m.zero_grad();
  m.forward(x, mode);
  const nn::Tensor<double> dx = m.backward(w);
  std::vector<std::vector<double>> analytic_params;
  for (auto* p : m.parameters()) analytic_params.emplace_back(p->grad.storage());

  GradCheck r;
  std::vector<double> numeric(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double lp = loss();
    x[i] = keep - h;
    const double lm = loss();
    x[i] = keep;
    numeric[i] = (lp - lm) / (2 * h);
  }
  r.input_error = relative_error(dx.storage(), numeric);

  // Parameters are compared as one concatenated vector.
  std::vector<double> analytic_all, numeric_all;
  std::size_t k = 0;
  for (auto* p : m.parameters()) {
    analytic_all.insert(analytic_all.end(), analytic_params[k].begin(), analytic_params[k].end());
    ++k;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss();
      p->value[i] = keep - h;
      const double lm = loss();
      p->value[i] = keep;
      numeric_all.push_back((lp - lm) / (2 * h));
    }
  }
  if (!analytic_all.empty()) r.param_error = relative_error(analytic_all, numeric_all);
  return r;
}

// Same check for a loss function of the prediction.
template <typename LossFn>
double check_loss_gradient(LossFn&& fn, nn::Tensor<double> pred, double h = 1e-5) {
  const nn::Tensor<double> analytic = fn(pred).grad;
  std::vector<double> numeric(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double keep = pred[i];
    pred[i] = keep + h;
    const double lp = fn(pred).value;
    pred[i] = keep - h;
    const double lm = fn(pred).value;
    pred[i] = keep;
    numeric[i] = (lp - lm) / (2 * h);
  }
  return relative_error(analytic.storage(), numeric);
}

}  // namespace cowbif::testing
