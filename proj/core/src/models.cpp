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

#include "cowbif/models.hpp"

#include <algorithm>

#include "cowbif/nn/checkpoint.hpp"
#include "cowbif/nn/optim.hpp"
#include "json.hpp"

namespace cowbif {

using nlohmann::json;

void ClassifierConfig::validate() const {
  if (widths.empty() || widths.size() != convs_per_block.size()) {
    throw InvalidArgument("classifier widths and convs_per_block must be non-empty and equally long");
  }
  if (std::any_of(widths.begin(), widths.end(), [](int w) { return w < 1; }) ||
      std::any_of(convs_per_block.begin(), convs_per_block.end(), [](int c) { return c < 1; })) {
    throw InvalidArgument("classifier widths and conv counts must be positive");
  }
  const int div = 1 << widths.size();
  if (input_size < div || input_size % div != 0) {
    throw InvalidArgument("classifier input size " + std::to_string(input_size) + " is not divisible by 2^" +
                          std::to_string(widths.size()) + " pooling stages");
  }
  if (hidden < 1 || classes < 2) throw InvalidArgument("classifier needs hidden >= 1 and classes >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("classifier dropout must lie in [0, 1)");
}

void UNetConfig::validate() const {
  if (levels < 1 || base_width < 1) throw InvalidArgument("unet needs levels >= 1 and base_width >= 1");
  const int div = 1 << (levels - 1);
  if (input_size < div || input_size % div != 0) {
    throw InvalidArgument("unet input size " + std::to_string(input_size) + " is not divisible by 2^" +
                          std::to_string(levels - 1));
  }
}

namespace {

template <typename T>
void add_conv_bn_relu(nn::Sequential<T>& seq, const std::string& prefix, int in, int out) {
  seq.add(std::make_unique<nn::Conv3d<T>>(prefix + ".conv", in, out, 3));
  seq.add(std::make_unique<nn::BatchNorm3d<T>>(prefix + ".bn", out));
  seq.add(std::make_unique<nn::ReLU<T>>(prefix + ".relu"));
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> double_conv(const std::string& name, int in, int out) {
  auto seq = std::make_unique<nn::Sequential<T>>(name);
  add_conv_bn_relu(*seq, name + ".0", in, out);
  add_conv_bn_relu(*seq, name + ".1", out, out);
  return seq;
}

template <typename T>
nn::Tensor<T> concat_channels(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t sa = a.stride0(), sb = b.stride0();
  if (b.dim(0) != n || sa / ca != sb / cb) {
    throw ShapeError("cannot concatenate " + nn::shape_to_string(a.shape()) + " with " +
                     nn::shape_to_string(b.shape()));
  }
  nn::Shape shape = a.shape();
  shape[1] = ca + cb;
  nn::Tensor<T> out(shape);
  for (int i = 0; i < n; ++i) {
    T* dst = out.data() + static_cast<std::size_t>(i) * (sa + sb);
    std::copy_n(a.data() + i * sa, sa, dst);
    std::copy_n(b.data() + i * sb, sb, dst + sa);
  }
  return out;
}

template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> split_channels(const nn::Tensor<T>& g, int ca) {
  const int n = g.dim(0), c = g.dim(1);
  const std::size_t per_channel = g.stride0() / static_cast<std::size_t>(c);
  nn::Shape sa = g.shape(), sb = g.shape();
  sa[1] = ca;
  sb[1] = c - ca;
  nn::Tensor<T> a(sa), b(sb);
  const std::size_t na = per_channel * ca, nb = per_channel * (c - ca);
  for (int i = 0; i < n; ++i) {
    const T* src = g.data() + static_cast<std::size_t>(i) * g.stride0();
    std::copy_n(src, na, a.data() + i * na);
    std::copy_n(src + na, nb, b.data() + i * nb);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

template <typename T>
UNet<T>::UNet(std::string name, const UNetConfig& config) : nn::Module<T>(std::move(name)), config_(config) {
  config_.validate();
  const int levels = config_.levels;
  auto width = [&](int l) { return config_.base_width << l; };
  for (int l = 0; l < levels; ++l) {
    encoder_.push_back(double_conv<T>("enc" + std::to_string(l), l == 0 ? 1 : width(l - 1), width(l)));
    if (l + 1 < levels) pools_.push_back(std::make_unique<nn::MaxPool3d<T>>("pool" + std::to_string(l)));
  }
  for (int l = 0; l + 1 < levels; ++l) {
    ups_.push_back(std::make_unique<nn::Upsample3d<T>>("up" + std::to_string(l)));
    decoder_.push_back(double_conv<T>("dec" + std::to_string(l), width(l) + width(l + 1), width(l)));
  }
  head_ = std::make_unique<nn::Conv3d<T>>("head", width(0), 1, 1);
  sigmoid_ = std::make_unique<nn::Sigmoid<T>>("sigmoid");
}

template <typename T>
nn::Tensor<T> UNet<T>::forward(const nn::Tensor<T>& x, nn::Mode mode) {
  const int levels = config_.levels;
  std::vector<nn::Tensor<T>> skips;
  nn::Tensor<T> h = x;
  for (int l = 0; l < levels; ++l) {
    h = encoder_[l]->forward(h, mode);
    if (l + 1 < levels) {
      skips.push_back(h);
      h = pools_[l]->forward(h, mode);
    }
  }
  skip_channels_.assign(static_cast<std::size_t>(std::max(levels - 1, 0)), 0);
  for (int l = levels - 2; l >= 0; --l) {
    h = ups_[l]->forward(h, mode);
    skip_channels_[l] = skips[l].dim(1);
    h = concat_channels(skips[l], h);
    skips[l] = nn::Tensor<T>();
    h = decoder_[l]->forward(h, mode);
  }
  h = head_->forward(h, mode);
  return sigmoid_->forward(h, mode);
}

template <typename T>
nn::Tensor<T> UNet<T>::backward(const nn::Tensor<T>& grad) {
  const int levels = config_.levels;
  nn::Tensor<T> g = head_->backward(sigmoid_->backward(grad));
  std::vector<nn::Tensor<T>> skip_grads(static_cast<std::size_t>(std::max(levels - 1, 0)));
  for (int l = 0; l + 1 < levels; ++l) {
    g = decoder_[l]->backward(g);
    auto [gs, gu] = split_channels(g, skip_channels_[l]);
    skip_grads[l] = std::move(gs);
    g = ups_[l]->backward(gu);
  }
  for (int l = levels - 1; l >= 0; --l) {
    g = encoder_[l]->backward(g);
    if (l > 0) {
      g = pools_[l - 1]->backward(g);
      const nn::Tensor<T>& s = skip_grads[l - 1];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i];
    }
  }
  return g;
}

template <typename T>
std::vector<nn::Param<T>*> UNet<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  for (nn::Module<T>* leaf : this->leaves()) {
    auto p = leaf->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<nn::Buffer<T>> UNet<T>::buffers() {
  std::vector<nn::Buffer<T>> out;
  for (nn::Module<T>* leaf : this->leaves()) {
    auto b = leaf->buffers();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

template <typename T>
void UNet<T>::collect_leaves(std::vector<nn::Module<T>*>& out) {
  for (auto& e : encoder_) e->collect_leaves(out);
  for (auto& d : decoder_) d->collect_leaves(out);
  out.push_back(head_.get());
  out.push_back(sigmoid_.get());
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> build_classifier(const ClassifierConfig& config, std::uint64_t seed) {
  config.validate();
  auto model = std::make_unique<nn::Sequential<T>>("classifier");
  int in = 1;
  for (std::size_t b = 0; b < config.widths.size(); ++b) {
    for (int c = 0; c < config.convs_per_block[b]; ++c) {
      add_conv_bn_relu(*model, "block" + std::to_string(b + 1) + "." + std::to_string(c), in, config.widths[b]);
      in = config.widths[b];
    }
    model->add(std::make_unique<nn::MaxPool3d<T>>("block" + std::to_string(b + 1) + ".pool"));
  }
  const int side = config.input_size >> config.widths.size();
  model->add(std::make_unique<nn::Flatten<T>>("flatten"));
  model->add(std::make_unique<nn::Dense<T>>("fc1", in * side * side * side, config.hidden));
  model->add(std::make_unique<nn::ReLU<T>>("fc1.relu"));
  model->add(std::make_unique<nn::Dropout<T>>("dropout", config.dropout));
  model->add(std::make_unique<nn::Dense<T>>("fc2", config.hidden, config.classes));
  model->add(std::make_unique<nn::Softmax<T>>("softmax"));
  nn::initialize(*model, seed);
  return model;
}

template <typename T>
std::unique_ptr<UNet<T>> build_unet(const UNetConfig& config, std::uint64_t seed) {
  auto model = std::make_unique<UNet<T>>("unet", config);
  nn::initialize(*model, seed);
  return model;
}

std::string architecture_json(const ClassifierConfig& c) {
  return json{{"type", "classifier"},        {"input_size", c.input_size}, {"widths", c.widths},
              {"convs_per_block", c.convs_per_block}, {"hidden", c.hidden},         {"dropout", c.dropout},
              {"classes", c.classes}}
      .dump();
}

std::string architecture_json(const UNetConfig& c) {
  return json{{"type", "unet"}, {"input_size", c.input_size}, {"base_width", c.base_width}, {"levels", c.levels}}
      .dump();
}

LoadedModel load_model(const std::string& checkpoint_path) {
  const nn::CheckpointMeta meta = nn::read_checkpoint_meta(checkpoint_path);
  json arch;
  try {
    arch = json::parse(meta.architecture);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + checkpoint_path + "' has an unreadable architecture: " + e.what());
  }
  LoadedModel out;
  try {
    out.type = arch.at("type").get<std::string>();
    if (out.type == "classifier") {
      ClassifierConfig c;
      c.input_size = arch.at("input_size").get<int>();
      c.widths = arch.at("widths").get<std::vector<int>>();
      c.convs_per_block = arch.at("convs_per_block").get<std::vector<int>>();
      c.hidden = arch.at("hidden").get<int>();
      c.dropout = arch.at("dropout").get<double>();
      c.classes = arch.at("classes").get<int>();
      out.input_size = c.input_size;
      out.model = build_classifier<float>(c, 0);
    } else if (out.type == "unet") {
      UNetConfig c;
      c.input_size = arch.at("input_size").get<int>();
      c.base_width = arch.at("base_width").get<int>();
      c.levels = arch.at("levels").get<int>();
      out.input_size = c.input_size;
      out.model = build_unet<float>(c, 0);
    } else {
      throw FormatError("checkpoint '" + checkpoint_path + "' has unknown model type '" + out.type + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + checkpoint_path + "' architecture is incomplete: " + e.what());
  }
  nn::load_checkpoint(checkpoint_path, *out.model);
  out.epoch = meta.epoch;
  out.seed = meta.seed;
  return out;
}

template class UNet<float>;
template class UNet<double>;
template std::unique_ptr<nn::Sequential<float>> build_classifier(const ClassifierConfig&, std::uint64_t);
template std::unique_ptr<nn::Sequential<double>> build_classifier(const ClassifierConfig&, std::uint64_t);
template std::unique_ptr<UNet<float>> build_unet(const UNetConfig&, std::uint64_t);
template std::unique_ptr<UNet<double>> build_unet(const UNetConfig&, std::uint64_t);

}  // namespace cowbif
