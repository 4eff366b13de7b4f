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

#include "cowbif/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cowbif/nn/losses.hpp"

namespace cowbif {

namespace {

using nn::Mode;
using nn::Tensor;

void check_finite_loss(double loss, const std::string& what, int epoch, int batch) {
  if (!std::isfinite(loss)) {
    throw TrainingError(what + " loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch));
  }
}

// Copies a patch into slot b of an (N, 1, S, S, S) batch and z-scores it.
void load_patch(Tensor<float>& batch, int b, const std::vector<float>& values) {
  float* dst = batch.data() + static_cast<std::size_t>(b) * batch.stride0();
  std::copy(values.begin(), values.end(), dst);
  zscore_normalize_inplace(std::span<float>(dst, values.size()));
}

void require_patch_size(const Patch& p, int size) {
  if (p.size != size || p.data.size() != static_cast<std::size_t>(size) * size * size) {
    throw ShapeError("patch of size " + std::to_string(p.size) + " given to a model expecting " +
                     std::to_string(size) + "^3 input");
  }
}

int argmax(const float* p, int k) {
  return static_cast<int>(std::max_element(p, p + k) - p);
}

}  // namespace

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write history '" + path.string() + "'");
  out << "epoch,fold,split,loss,accuracy\n";
  out.precision(9);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.fold << ',' << r.split << ',' << r.loss << ',';
    if (r.accuracy) out << *r.accuracy;
    out << '\n';
  }
}

// ------------------------------------------------------------- classifier

Evaluation evaluate_classifier(nn::Module<float>& model, const std::vector<LabeledPatch>& patches,
                               int batch_size) {
  Evaluation ev;
  if (patches.empty()) return ev;
  const int size = patches.front().patch.size;
  double loss = 0.0;
  int correct = 0;
  for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
    const int n = static_cast<int>(std::min<std::size_t>(batch_size, patches.size() - start));
    Tensor<float> x({n, 1, size, size, size});
    Tensor<float> y({n, kNumClasses});
    for (int b = 0; b < n; ++b) {
      const LabeledPatch& lp = patches[start + b];
      require_patch_size(lp.patch, size);
      load_patch(x, b, lp.patch.data);
      y[static_cast<std::size_t>(b) * kNumClasses + to_index(lp.label)] = 1.0f;
    }
    const Tensor<float> probs = model.forward(x, Mode::kEval);
    if (probs.rank() != 2 || probs.dim(1) != kNumClasses) {
      throw ShapeError("classifier output " + nn::shape_to_string(probs.shape()) + " is not (N, 14)");
    }
    loss += nn::cross_entropy(probs, y).value * n;
    for (int b = 0; b < n; ++b) {
      const float* row = probs.data() + static_cast<std::size_t>(b) * kNumClasses;
      const int pred = argmax(row, kNumClasses);
      const int label = to_index(patches[start + b].label);
      correct += pred == label;
      ev.predictions.push_back(pred);
      ev.labels.push_back(label);
      ClassProbabilities cp{};
      std::copy(row, row + kNumClasses, cp.begin());
      ev.probabilities.push_back(cp);
    }
  }
  ev.loss = loss / static_cast<double>(patches.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(patches.size());
  return ev;
}

std::vector<EpochRecord> train_classifier(nn::Module<float>& model, const std::vector<LabeledPatch>& train,
                                          const std::vector<LabeledPatch>& val,
                                          const ClassifierTrainConfig& config, int fold,
                                          const EpochCallback& on_epoch) {
  if (train.empty()) throw InvalidArgument("train_classifier needs a non-empty training set");
  if (config.epochs < 0 || config.batch_size < 1) {
    throw InvalidArgument("train_classifier needs epochs >= 0 and batch_size >= 1");
  }
  const int size = train.front().patch.size;
  std::vector<EpochRecord> history;
  auto record = [&](EpochRecord r) {
    if (on_epoch) on_epoch(r);
    history.push_back(std::move(r));
  };
  {
    const Evaluation e = evaluate_classifier(model, train, config.batch_size);
    record({0, fold, "train", e.loss, e.accuracy});
    if (!val.empty()) {
      const Evaluation v = evaluate_classifier(model, val, config.batch_size);
      record({0, fold, "val", v.loss, v.accuracy});
    }
  }

  nn::Adam<float> adam(config.adam);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto params = model.parameters();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int correct = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const int n = static_cast<int>(std::min<std::size_t>(config.batch_size, order.size() - start));
      Tensor<float> x({n, 1, size, size, size});
      Tensor<float> y({n, kNumClasses});
      std::vector<int> labels(static_cast<std::size_t>(n));
      for (int b = 0; b < n; ++b) {
        const LabeledPatch& lp = train[order[start + b]];
        require_patch_size(lp.patch, size);
        Label label = lp.label;
        if (config.augment) {
          auto [patch, l] = augment_flip(lp.patch, lp.label, rng);
          load_patch(x, b, patch.data);
          label = l;
        } else {
          load_patch(x, b, lp.patch.data);
        }
        labels[b] = to_index(label);
        y[static_cast<std::size_t>(b) * kNumClasses + labels[b]] = 1.0f;
      }
      model.zero_grad();
      const Tensor<float> probs = model.forward(x, Mode::kTrain);
      const nn::LossResult<float> loss = nn::cross_entropy(probs, y);
      check_finite_loss(loss.value, "classifier", epoch, batch_index);
      model.backward(loss.grad);
      try {
        adam.step(params);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      loss_sum += loss.value * n;
      for (int b = 0; b < n; ++b) {
        correct += argmax(probs.data() + static_cast<std::size_t>(b) * kNumClasses, kNumClasses) == labels[b];
      }
      ++batch_index;
    }
    const double total = static_cast<double>(train.size());
    record({epoch, fold, "train", loss_sum / total, correct / total});
    if (!val.empty()) {
      const Evaluation v = evaluate_classifier(model, val, config.batch_size);
      record({epoch, fold, "val", v.loss, v.accuracy});
    }
  }
  return history;
}

ClassProbabilities predict_patch(nn::Module<float>& model, const Patch& patch, int input_size) {
  return predict_patches({&model}, {patch}, input_size, 1).front();
}

std::vector<ClassProbabilities> predict_patches(const std::vector<nn::Module<float>*>& models,
                                                const std::vector<Patch>& patches, int input_size,
                                                int batch_size) {
  if (models.empty()) throw InvalidArgument("predict_patches needs at least one model");
  std::vector<ClassProbabilities> out(patches.size(), ClassProbabilities{});
  for (const Patch& p : patches) require_patch_size(p, input_size);
  for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
    const int n = static_cast<int>(std::min<std::size_t>(batch_size, patches.size() - start));
    Tensor<float> x({n, 1, input_size, input_size, input_size});
    for (int b = 0; b < n; ++b) load_patch(x, b, patches[start + b].data);
    for (nn::Module<float>* m : models) {
      const Tensor<float> probs = m->forward(x, Mode::kEval);
      if (probs.rank() != 2 || probs.dim(1) != kNumClasses) {
        throw ShapeError("classifier output " + nn::shape_to_string(probs.shape()) + " is not (N, 14)");
      }
      for (int b = 0; b < n; ++b) {
        for (int c = 0; c < kNumClasses; ++c) {
          out[start + b][c] += probs[static_cast<std::size_t>(b) * kNumClasses + c];
        }
      }
    }
    if (models.size() > 1) {
      for (int b = 0; b < n; ++b) {
        for (double& v : out[start + b]) v /= static_cast<double>(models.size());
      }
    }
  }
  return out;
}

// ------------------------------------------------------------------ U-Net

std::vector<Index3> sample_unet_centers(const MaskVolume& mask, int count, double on_fraction,
                                        std::mt19937_64& rng) {
  if (count < 0 || !(on_fraction >= 0.0 && on_fraction <= 1.0)) {
    throw InvalidArgument("sample_unet_centers needs count >= 0 and on_fraction in [0, 1]");
  }
  const int on = static_cast<int>(std::lround(count * on_fraction));
  const int off = count - on;
  const auto values = mask.data();
  std::size_t n_on = 0;
  for (auto v : values) n_on += v != 0;
  const std::size_t n_off = values.size() - n_on;
  if ((on > 0 && n_on == 0) || (off > 0 && n_off == 0)) {
    throw InvalidArgument("sample_unet_centers: mask has no " + std::string(n_on == 0 ? "foreground" : "background") +
                          " voxels to draw from");
  }
  // Draw ranks within each class, then resolve them in one scan.
  std::uniform_int_distribution<std::size_t> pick_on(0, n_on == 0 ? 0 : n_on - 1);
  std::uniform_int_distribution<std::size_t> pick_off(0, n_off == 0 ? 0 : n_off - 1);
  std::vector<std::pair<std::size_t, bool>> wanted;
  for (int i = 0; i < on; ++i) wanted.emplace_back(pick_on(rng), true);
  for (int i = 0; i < off; ++i) wanted.emplace_back(pick_off(rng), false);
  // Request indices per class, ordered by rank.
  std::vector<std::size_t> on_idx, off_idx;
  for (std::size_t r = 0; r < wanted.size(); ++r) (wanted[r].second ? on_idx : off_idx).push_back(r);
  auto by_rank = [&](std::size_t a, std::size_t b) { return wanted[a].first < wanted[b].first; };
  std::sort(on_idx.begin(), on_idx.end(), by_rank);
  std::sort(off_idx.begin(), off_idx.end(), by_rank);
  std::vector<Index3> out(wanted.size());
  std::size_t rank_on = 0, rank_off = 0, pi_on = 0, pi_off = 0;
  for (std::size_t i = 0; i < values.size() && (pi_on < on_idx.size() || pi_off < off_idx.size()); ++i) {
    if (values[i]) {
      while (pi_on < on_idx.size() && wanted[on_idx[pi_on]].first == rank_on) out[on_idx[pi_on++]] = mask.coords(i);
      ++rank_on;
    } else {
      while (pi_off < off_idx.size() && wanted[off_idx[pi_off]].first == rank_off) out[off_idx[pi_off++]] = mask.coords(i);
      ++rank_off;
    }
  }
  return out;
}

namespace {

struct UNetBatchSource {
  const std::vector<SegmentationSample>& data;
  int size;

  void fill(const std::vector<std::pair<std::size_t, Index3>>& items, std::size_t start, int n,
            Tensor<float>& x, Tensor<float>& t) const {
    for (int b = 0; b < n; ++b) {
      const auto& [vi, c] = items[start + b];
      const Patch p = crop_patch(*data[vi].image, c, size);
      load_patch(x, b, p.data);
      const auto m = crop_mask(*data[vi].mask, c, size);
      float* dst = t.data() + static_cast<std::size_t>(b) * t.stride0();
      for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m[i] ? 1.0f : 0.0f;
    }
  }
};

}  // namespace

std::vector<EpochRecord> train_unet(nn::Module<float>& model, const std::vector<SegmentationSample>& data,
                                    const UNetTrainConfig& config, int input_size,
                                    const EpochCallback& on_epoch) {
  if (data.empty()) throw InvalidArgument("train_unet needs at least one volume");
  for (const auto& s : data) {
    if (s.image == nullptr || s.mask == nullptr || !s.image->same_geometry(*s.mask)) {
      throw InvalidArgument("train_unet needs paired volumes and masks of equal geometry");
    }
  }
  if (config.epochs < 0 || config.batch_size < 1 || config.patches_per_volume < 1) {
    throw InvalidArgument("train_unet needs epochs >= 0, batch_size >= 1 and patches_per_volume >= 1");
  }
  std::vector<EpochRecord> history;
  auto record = [&](EpochRecord r) {
    if (on_epoch) on_epoch(r);
    history.push_back(std::move(r));
  };
  const UNetBatchSource source{data, input_size};
  std::mt19937_64 rng(config.seed);

  // Fixed probe set, drawn once with the same on/off ratio.
  std::vector<std::pair<std::size_t, Index3>> probe;
  for (int i = 0; i < config.probe_patches; ++i) {
    const std::size_t vi = static_cast<std::size_t>(i) % data.size();
    const double on = i % 10 < static_cast<int>(std::lround(config.on_mask_fraction * 10)) ? 1.0 : 0.0;
    probe.emplace_back(vi, sample_unet_centers(*data[vi].mask, 1, on, rng).front());
  }
  auto probe_loss = [&]() {
    double sum = 0.0;
    int count = 0;
    for (std::size_t s = 0; s < probe.size(); s += static_cast<std::size_t>(config.batch_size)) {
      const int n = static_cast<int>(std::min<std::size_t>(config.batch_size, probe.size() - s));
      Tensor<float> x({n, 1, input_size, input_size, input_size}), t(x.shape());
      source.fill(probe, s, n, x, t);
      sum += nn::dice_loss(model.forward(x, Mode::kEval), t).value * n;
      count += n;
    }
    return count ? sum / count : 0.0;
  };
  if (!probe.empty()) record({0, 0, "probe", probe_loss(), std::nullopt});

  nn::Adam<float> adam(config.adam);
  const auto params = model.parameters();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::pair<std::size_t, Index3>> items;
    for (std::size_t vi = 0; vi < data.size(); ++vi) {
      for (const Index3& c :
           sample_unet_centers(*data[vi].mask, config.patches_per_volume, config.on_mask_fraction, rng)) {
        items.emplace_back(vi, c);
      }
    }
    std::shuffle(items.begin(), items.end(), rng);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t s = 0; s < items.size(); s += static_cast<std::size_t>(config.batch_size)) {
      const int n = static_cast<int>(std::min<std::size_t>(config.batch_size, items.size() - s));
      Tensor<float> x({n, 1, input_size, input_size, input_size}), t(x.shape());
      source.fill(items, s, n, x, t);
      model.zero_grad();
      const Tensor<float> pred = model.forward(x, Mode::kTrain);
      const nn::LossResult<float> loss = nn::dice_loss(pred, t);
      check_finite_loss(loss.value, "unet", epoch, batch_index);
      model.backward(loss.grad);
      try {
        adam.step(params);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      loss_sum += loss.value * n;
      ++batch_index;
    }
    record({epoch, 0, "train", loss_sum / static_cast<double>(items.size()), std::nullopt});
    if (!probe.empty()) record({epoch, 0, "probe", probe_loss(), std::nullopt});
  }
  return history;
}

PatchPredictor unet_predictor(nn::Module<float>& model) {
  return [&model](const std::vector<float>& patch, int window) {
    Tensor<float> x({1, 1, window, window, window}, patch);
    Tensor<float> y = model.forward(x, Mode::kEval);
    if (y.size() != patch.size()) {
      throw ShapeError("segmentation model returned " + nn::shape_to_string(y.shape()) + " for a " +
                       std::to_string(window) + "^3 window");
    }
    return std::move(y.storage());
  };
}

std::vector<int> window_starts(int extent, int window, int stride) {
  if (window < 1 || stride < 1) throw InvalidArgument("window and stride must be positive");
  if (extent <= window) return {0};
  std::vector<int> s;
  for (int p = 0; p + window < extent; p += stride) s.push_back(p);
  s.push_back(extent - window);
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

MaskVolume segment_volume(const Volume3D& volume, const PatchPredictor& predictor, const SlidingWindow& config,
                          SegmentationTrace* trace) {
  const Dims3 d = volume.dims();
  const int w = config.window;
  const auto xs = window_starts(d.nx, w, config.stride);
  const auto ys = window_starts(d.ny, w, config.stride);
  const auto zs = window_starts(d.nz, w, config.stride);
  std::vector<double> sum(volume.size(), 0.0);
  std::vector<std::uint16_t> cover(volume.size(), 0);
  std::vector<float> patch(static_cast<std::size_t>(w) * w * w);
  for (int z0 : zs) {
    for (int y0 : ys) {
      for (int x0 : xs) {
        std::fill(patch.begin(), patch.end(), 0.0f);
        for (int z = 0; z < w && z0 + z < d.nz; ++z) {
          for (int y = 0; y < w && y0 + y < d.ny; ++y) {
            for (int x = 0; x < w && x0 + x < d.nx; ++x) {
              patch[(static_cast<std::size_t>(z) * w + y) * w + x] = volume(x0 + x, y0 + y, z0 + z);
            }
          }
        }
        zscore_normalize_inplace(patch);
        const std::vector<float> prob = predictor(patch, w);
        if (prob.size() != patch.size()) throw ShapeError("patch predictor returned the wrong number of values");
        for (int z = 0; z < w && z0 + z < d.nz; ++z) {
          for (int y = 0; y < w && y0 + y < d.ny; ++y) {
            for (int x = 0; x < w && x0 + x < d.nx; ++x) {
              const std::size_t i = volume.index(x0 + x, y0 + y, z0 + z);
              sum[i] += prob[(static_cast<std::size_t>(z) * w + y) * w + x];
              cover[i] += 1;
            }
          }
        }
      }
    }
  }
  MaskVolume mask(d, volume.spacing(), 0);
  Volume3D probability(d, volume.spacing(), 0.0f);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double p = sum[i] / cover[i];
    probability.data()[i] = static_cast<float>(p);
    mask.data()[i] = p >= config.threshold ? 1 : 0;
  }
  if (trace != nullptr) {
    trace->probability = std::move(probability);
    trace->coverage = std::move(cover);
  }
  return mask;
}

}  // namespace cowbif
