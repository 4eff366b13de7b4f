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

#include "cowbif/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace cowbif::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_rank(const Shape& s, int rank, const std::string& what) {
  if (static_cast<int>(s.size()) != rank) {
    throw ShapeError(what + " expects a rank-" + std::to_string(rank) + " tensor, got " +
                     shape_to_string(s));
  }
}

}  // namespace

// ---------------------------------------------------------------- Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad) {
  Tensor<T> g = grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::parameters() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<Buffer<T>> Sequential<T>::buffers() {
  std::vector<Buffer<T>> out;
  for (auto& l : layers_) {
    auto b = l->buffers();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

// --------------------------------------------------------------- BatchNorm3d

template <typename T>
BatchNorm3d<T>::BatchNorm3d(std::string name, int channels, double eps, double momentum)
    : Module<T>(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum) {
  if (channels < 1) throw InvalidArgument("batchnorm '" + this->name() + "' needs channels >= 1");
  gamma_ = {this->name() + ".gamma", Tensor<T>({channels}, T{1}), Tensor<T>({channels})};
  beta_ = {this->name() + ".beta", Tensor<T>({channels}), Tensor<T>({channels})};
  running_mean_ = Tensor<T>({channels}, T{0});
  running_var_ = Tensor<T>({channels}, T{1});
}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != channels_) {
    throw ShapeError("batchnorm '" + this->name() + "' expects " + std::to_string(channels_) +
                     " channels, got " + shape_to_string(x.shape()));
  }
  const int n = x.dim(0);
  const std::size_t spatial = x.size() / (static_cast<std::size_t>(n) * channels_);
  const std::size_t m = static_cast<std::size_t>(n) * spatial;
  Tensor<T> y(x.shape());
  last_mode_ = mode;
  inv_std_.assign(static_cast<std::size_t>(channels_), T{0});
  if (mode == Mode::kTrain) xhat_ = Tensor<T>(x.shape());
  for (int c = 0; c < channels_; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * channels_ + cc) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      mean = s / static_cast<double>(m);
      double ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * channels_ + cc) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = p[i] - mean;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(m);
      running_mean_[cc] = static_cast<T>(momentum_ * running_mean_[cc] + (1.0 - momentum_) * mean);
      running_var_[cc] = static_cast<T>(momentum_ * running_var_[cc] + (1.0 - momentum_) * var);
    } else {
      mean = running_mean_[cc];
      var = running_var_[cc];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[cc] = static_cast<T>(inv);
    const T g = gamma_.value[cc];
    const T bt = beta_.value[cc];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + cc) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * inv);
        if (mode == Mode::kTrain) xhat_[off + i] = xh;
        y[off + i] = g * xh + bt;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward(const Tensor<T>& grad) {
  if (last_mode_ != Mode::kTrain || xhat_.empty()) {
    throw ShapeError("batchnorm '" + this->name() + "' backward without a training forward");
  }
  require_shape(grad.shape(), xhat_.shape(), "batchnorm '" + this->name() + "' gradient");
  const int n = grad.dim(0);
  const std::size_t spatial = grad.size() / (static_cast<std::size_t>(n) * channels_);
  const double m = static_cast<double>(n) * static_cast<double>(spatial);
  Tensor<T> dx(grad.shape());
  for (int c = 0; c < channels_; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + cc) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += grad[off + i];
        sum_dy_xh += static_cast<double>(grad[off + i]) * xhat_[off + i];
      }
    }
    gamma_.grad[cc] += static_cast<T>(sum_dy_xh);
    beta_.grad[cc] += static_cast<T>(sum_dy);
    const double g = gamma_.value[cc];
    const double k = g * inv_std_[cc] / m;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + cc) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        dx[off + i] = static_cast<T>(k * (m * grad[off + i] - sum_dy - xhat_[off + i] * sum_dy_xh));
      }
    }
  }
  return dx;
}

// --------------------------------------------------------------- activations

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = v > T{0} ? v : T{0};
  if (mode == Mode::kTrain) output_ = y;
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad) {
  require_shape(grad.shape(), output_.shape(), "relu '" + this->name() + "' gradient");
  Tensor<T> dx = grad;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(output_[i] > T{0})) dx[i] = T{0};
  }
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = T{1} / (T{1} + std::exp(-v));
  if (mode == Mode::kTrain) output_ = y;
  return y;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad) {
  require_shape(grad.shape(), output_.shape(), "sigmoid '" + this->name() + "' gradient");
  Tensor<T> dx = grad;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (T{1} - output_[i]);
  return dx;
}

template <typename T>
Tensor<T> Softmax<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank(x.shape(), 2, "softmax '" + this->name() + "'");
  const int n = x.dim(0), k = x.dim(1);
  Tensor<T> y(x.shape());
  for (int r = 0; r < n; ++r) {
    const T* in = x.data() + static_cast<std::size_t>(r) * k;
    T* out = y.data() + static_cast<std::size_t>(r) * k;
    const T mx = *std::max_element(in, in + k);
    T s{0};
    for (int j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - mx);
      s += out[j];
    }
    for (int j = 0; j < k; ++j) out[j] /= s;
  }
  if (mode == Mode::kTrain) output_ = y;
  return y;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& grad) {
  require_shape(grad.shape(), output_.shape(), "softmax '" + this->name() + "' gradient");
  const int n = grad.dim(0), k = grad.dim(1);
  Tensor<T> dx(grad.shape());
  for (int r = 0; r < n; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * k;
    T dot{0};
    for (int j = 0; j < k; ++j) dot += grad[off + j] * output_[off + j];
    for (int j = 0; j < k; ++j) dx[off + j] = output_[off + j] * (grad[off + j] - dot);
  }
  return dx;
}

// ------------------------------------------------------------ pool / upsample

template <typename T>
Tensor<T> MaxPool3d<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank(x.shape(), 5, "maxpool '" + this->name() + "'");
  const int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  if (d % 2 || h % 2 || w % 2) {
    throw ShapeError("maxpool '" + this->name() + "' needs even spatial extents, got " +
                     shape_to_string(x.shape()));
  }
  const int od = d / 2, oh = h / 2, ow = w / 2;
  Tensor<T> y({n, c, od, oh, ow});
  std::vector<std::size_t> arg(y.size());
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
    const std::size_t base = nc * static_cast<std::size_t>(d) * h * w;
    for (int z = 0; z < od; ++z) {
      for (int yy = 0; yy < oh; ++yy) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          std::size_t best = base + (static_cast<std::size_t>(2 * z) * h + 2 * yy) * w + 2 * xx;
          T bv = x[best];
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i =
                    base + (static_cast<std::size_t>(2 * z + dz) * h + 2 * yy + dy) * w + 2 * xx + dx;
                if (x[i] > bv) {
                  bv = x[i];
                  best = i;
                }
              }
            }
          }
          y[o] = bv;
          arg[o] = best;
        }
      }
    }
  }
  if (mode == Mode::kTrain) {
    input_shape_ = x.shape();
    argmax_ = std::move(arg);
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward(const Tensor<T>& grad) {
  if (grad.size() != argmax_.size()) {
    throw ShapeError("maxpool '" + this->name() + "' gradient " + shape_to_string(grad.shape()) +
                     " does not match the last training forward");
  }
  Tensor<T> dx(input_shape_);
  for (std::size_t o = 0; o < grad.size(); ++o) dx[argmax_[o]] += grad[o];
  return dx;
}

template <typename T>
Tensor<T> Upsample3d<T>::forward(const Tensor<T>& x, Mode) {
  require_rank(x.shape(), 5, "upsample '" + this->name() + "'");
  const int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  Tensor<T> y({n, c, 2 * d, 2 * h, 2 * w});
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
    const T* src = x.data() + nc * static_cast<std::size_t>(d) * h * w;
    for (int z = 0; z < 2 * d; ++z) {
      for (int yy = 0; yy < 2 * h; ++yy) {
        const T* line = src + (static_cast<std::size_t>(z / 2) * h + yy / 2) * w;
        for (int xx = 0; xx < 2 * w; ++xx) y[o++] = line[xx / 2];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Upsample3d<T>::backward(const Tensor<T>& grad) {
  require_rank(grad.shape(), 5, "upsample '" + this->name() + "' gradient");
  const int n = grad.dim(0), c = grad.dim(1), d = grad.dim(2) / 2, h = grad.dim(3) / 2,
            w = grad.dim(4) / 2;
  Tensor<T> dx({n, c, d, h, w});
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
    T* dst = dx.data() + nc * static_cast<std::size_t>(d) * h * w;
    for (int z = 0; z < 2 * d; ++z) {
      for (int yy = 0; yy < 2 * h; ++yy) {
        T* line = dst + (static_cast<std::size_t>(z / 2) * h + yy / 2) * w;
        for (int xx = 0; xx < 2 * w; ++xx) line[xx / 2] += grad[o++];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, Mode) {
  if (x.rank() < 1) throw ShapeError("flatten '" + this->name() + "' on a scalar tensor");
  input_shape_ = x.shape();
  const int n = x.dim(0);
  return x.reshaped({n, static_cast<int>(n == 0 ? 0 : x.size() / static_cast<std::size_t>(n))});
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad) {
  return grad.reshaped(input_shape_);
}

// --------------------------------------------------------------------- dense

template <typename T>
Dense<T>::Dense(std::string name, int in_features, int out_features)
    : Module<T>(std::move(name)), in_(in_features), out_(out_features) {
  if (in_ < 1 || out_ < 1) throw InvalidArgument("dense '" + this->name() + "' needs positive sizes");
  weight_ = {this->name() + ".weight", Tensor<T>({out_, in_}), Tensor<T>({out_, in_})};
  bias_ = {this->name() + ".bias", Tensor<T>({out_}), Tensor<T>({out_})};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ShapeError("dense '" + this->name() + "' expects (N, " + std::to_string(in_) + "), got " +
                     shape_to_string(x.shape()));
  }
  const int n = x.dim(0);
  Tensor<T> y({n, out_});
  Eigen::Map<const RowMat<T>> xm(x.data(), n, in_);
  Eigen::Map<const RowMat<T>> wm(weight_.value.data(), out_, in_);
  Eigen::Map<RowMat<T>> ym(y.data(), n, out_);
  ym.noalias() = xm * wm.transpose();
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < out_; ++j) ym(r, j) += bias_.value[static_cast<std::size_t>(j)];
  }
  if (mode == Mode::kTrain) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad) {
  const int n = input_.empty() ? 0 : input_.dim(0);
  require_shape(grad.shape(), {n, out_}, "dense '" + this->name() + "' gradient");
  Eigen::Map<const RowMat<T>> xm(input_.data(), n, in_);
  Eigen::Map<const RowMat<T>> gm(grad.data(), n, out_);
  Eigen::Map<const RowMat<T>> wm(weight_.value.data(), out_, in_);
  Eigen::Map<RowMat<T>> dw(weight_.grad.data(), out_, in_);
  dw.noalias() += gm.transpose() * xm;
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < out_; ++j) bias_.grad[static_cast<std::size_t>(j)] += gm(r, j);
  }
  Tensor<T> dx({n, in_});
  Eigen::Map<RowMat<T>> dxm(dx.data(), n, in_);
  dxm.noalias() = gm * wm;
  return dx;
}

// ------------------------------------------------------------------- dropout

template <typename T>
Dropout<T>::Dropout(std::string name, double rate, std::uint64_t seed)
    : Module<T>(std::move(name)), rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidArgument("dropout '" + this->name() + "' rate must lie in [0, 1)");
  }
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
  last_train_ = mode == Mode::kTrain;
  if (!last_train_) return x;
  if (!frozen_ || mask_.size() != x.size()) {
    mask_.resize(x.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T keep = static_cast<T>(1.0 / (1.0 - rate_));
    for (T& m : mask_) m = u(rng_) < rate_ ? T{0} : keep;
  }
  Tensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask_[i];
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad) {
  if (!last_train_) return grad;
  if (grad.size() != mask_.size()) throw ShapeError("dropout '" + this->name() + "' gradient size mismatch");
  Tensor<T> dx = grad;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
  return dx;
}

#define COWBIF_LAYERS_INSTANTIATE(T) \
  template class Sequential<T>;      \
  template class BatchNorm3d<T>;     \
  template class ReLU<T>;            \
  template class Sigmoid<T>;         \
  template class Softmax<T>;         \
  template class MaxPool3d<T>;       \
  template class Upsample3d<T>;      \
  template class Flatten<T>;         \
  template class Dense<T>;           \
  template class Dropout<T>;

COWBIF_LAYERS_INSTANTIATE(float)
COWBIF_LAYERS_INSTANTIATE(double)

#undef COWBIF_LAYERS_INSTANTIATE

}  // namespace cowbif::nn
