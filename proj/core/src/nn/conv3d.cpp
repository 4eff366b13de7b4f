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

#include <Eigen/Core>
#include <algorithm>

#include "cowbif/nn/layers.hpp"

namespace cowbif::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

constexpr std::size_t kColumnBudgetBytes = std::size_t{64} << 20;

struct Geometry {
  int n, cin, d, h, w;
  int cout, k, stride, pad;
  int od, oh, ow;

  std::size_t rows() const { return static_cast<std::size_t>(cin) * k * k * k; }
  std::size_t plane() const { return static_cast<std::size_t>(oh) * ow; }
  std::size_t in_volume() const { return static_cast<std::size_t>(d) * h * w; }
  std::size_t out_volume() const { return static_cast<std::size_t>(od) * plane(); }

  // Output depth slices per im2col chunk.
  int chunk_depth(std::size_t elem) const {
    const std::size_t per_slice = rows() * plane() * elem;
    const std::size_t fit = per_slice == 0 ? 1 : kColumnBudgetBytes / per_slice;
    return static_cast<int>(std::clamp<std::size_t>(fit, 1, static_cast<std::size_t>(od)));
  }
};

template <typename T>
Geometry geometry(const Tensor<T>& input, const Tensor<T>& weight, int stride, int pad) {
  if (input.rank() != 5) {
    throw ShapeError("conv3d input must be (N, C, D, H, W), got " + shape_to_string(input.shape()));
  }
  if (weight.rank() != 5 || weight.dim(2) != weight.dim(3) || weight.dim(2) != weight.dim(4)) {
    throw ShapeError("conv3d weight must be (Cout, Cin, k, k, k), got " +
                     shape_to_string(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv3d channel mismatch: input has " + std::to_string(input.dim(1)) +
                     " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv3d needs stride >= 1 and pad >= 0");
  Geometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), input.dim(4),
             weight.dim(0), weight.dim(2), stride, pad, 0, 0, 0};
  g.od = (g.d + 2 * pad - g.k) / stride + 1;
  g.oh = (g.h + 2 * pad - g.k) / stride + 1;
  g.ow = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.od < 1 || g.oh < 1 || g.ow < 1) {
    throw ShapeError("conv3d kernel " + std::to_string(g.k) + " larger than padded input " +
                     shape_to_string(input.shape()));
  }
  return g;
}

// Fills col (rows x (depth_count * plane)) for output slices [z0, z0 + count).
template <typename T>
void im2col(const T* in, const Geometry& g, int z0, int count, T* col) {
  const std::size_t cols = static_cast<std::size_t>(count) * g.plane();
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c) {
    const T* src = in + static_cast<std::size_t>(c) * g.in_volume();
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          T* dst = col + row * cols;
          for (int oz = z0; oz < z0 + count; ++oz) {
            const int iz = oz * g.stride - g.pad + kz;
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * g.stride - g.pad + ky;
              T* out = dst + (static_cast<std::size_t>(oz - z0) * g.oh + oy) * g.ow;
              if (iz < 0 || iz >= g.d || iy < 0 || iy >= g.h) {
                std::fill(out, out + g.ow, T{0});
                continue;
              }
              const T* line = src + (static_cast<std::size_t>(iz) * g.h + iy) * g.w;
              if (g.stride == 1) {
                const int lo = std::max(0, g.pad - kx);
                const int hi = std::min(g.ow, g.w + g.pad - kx);
                std::fill(out, out + std::max(lo, 0), T{0});
                if (hi > lo) std::copy(line + lo - g.pad + kx, line + hi - g.pad + kx, out + lo);
                std::fill(out + std::max(hi, lo), out + g.ow, T{0});
              } else {
                for (int ox = 0; ox < g.ow; ++ox) {
                  const int ix = ox * g.stride - g.pad + kx;
                  out[ox] = (ix < 0 || ix >= g.w) ? T{0} : line[ix];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Scatter-adds col back into the input gradient.
template <typename T>
void col2im(const T* col, const Geometry& g, int z0, int count, T* in) {
  const std::size_t cols = static_cast<std::size_t>(count) * g.plane();
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c) {
    T* dst = in + static_cast<std::size_t>(c) * g.in_volume();
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          const T* src = col + row * cols;
          for (int oz = z0; oz < z0 + count; ++oz) {
            const int iz = oz * g.stride - g.pad + kz;
            if (iz < 0 || iz >= g.d) continue;
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.h) continue;
              const T* from = src + (static_cast<std::size_t>(oz - z0) * g.oh + oy) * g.ow;
              T* line = dst + (static_cast<std::size_t>(iz) * g.h + iy) * g.w;
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix >= 0 && ix < g.w) line[ix] += from[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, int pad) {
  const Geometry g = geometry(input, weight, stride, pad);
  if (!bias.empty()) require_shape(bias.shape(), {g.cout}, "conv3d bias");
  Tensor<T> out({g.n, g.cout, g.od, g.oh, g.ow});
  const int chunk = g.chunk_depth(sizeof(T));
  std::vector<T> col(g.rows() * static_cast<std::size_t>(chunk) * g.plane());
  const ConstMapMat<T> wmat(weight.data(), g.cout, static_cast<Eigen::Index>(g.rows()));
  for (int n = 0; n < g.n; ++n) {
    const T* in = input.data() + static_cast<std::size_t>(n) * input.stride0();
    T* o = out.data() + static_cast<std::size_t>(n) * out.stride0();
    for (int z0 = 0; z0 < g.od; z0 += chunk) {
      const int count = std::min(chunk, g.od - z0);
      const auto cols = static_cast<Eigen::Index>(static_cast<std::size_t>(count) * g.plane());
      im2col(in, g, z0, count, col.data());
      const ConstMapMat<T> cmat(col.data(), static_cast<Eigen::Index>(g.rows()), cols);
      // Output rows are strided by the full output volume per channel.
      Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>> omat(
          o + static_cast<std::size_t>(z0) * g.plane(), g.cout, cols,
          Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_volume())));
      omat.noalias() = wmat * cmat;
    }
    if (!bias.empty()) {
      for (int c = 0; c < g.cout; ++c) {
        T* ch = o + static_cast<std::size_t>(c) * g.out_volume();
        std::for_each(ch, ch + g.out_volume(), [b = bias[static_cast<std::size_t>(c)]](T& v) { v += b; });
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, int stride, int pad, bool with_bias) {
  const Geometry g = geometry(input, weight, stride, pad);
  require_shape(grad_out.shape(), {g.n, g.cout, g.od, g.oh, g.ow}, "conv3d output gradient");
  ConvGrads<T> r{Tensor<T>(input.shape()), Tensor<T>(weight.shape()),
                 with_bias ? Tensor<T>({g.cout}) : Tensor<T>()};
  const int chunk = g.chunk_depth(sizeof(T));
  std::vector<T> col(g.rows() * static_cast<std::size_t>(chunk) * g.plane());
  std::vector<T> dcol(col.size());
  const ConstMapMat<T> wmat(weight.data(), g.cout, static_cast<Eigen::Index>(g.rows()));
  MapMat<T> dw(r.weight.data(), g.cout, static_cast<Eigen::Index>(g.rows()));
  for (int n = 0; n < g.n; ++n) {
    const T* in = input.data() + static_cast<std::size_t>(n) * input.stride0();
    const T* go = grad_out.data() + static_cast<std::size_t>(n) * grad_out.stride0();
    T* gi = r.input.data() + static_cast<std::size_t>(n) * r.input.stride0();
    for (int z0 = 0; z0 < g.od; z0 += chunk) {
      const int count = std::min(chunk, g.od - z0);
      const auto cols = static_cast<Eigen::Index>(static_cast<std::size_t>(count) * g.plane());
      im2col(in, g, z0, count, col.data());
      const ConstMapMat<T> cmat(col.data(), static_cast<Eigen::Index>(g.rows()), cols);
      Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> gmat(
          go + static_cast<std::size_t>(z0) * g.plane(), g.cout, cols,
          Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_volume())));
      dw.noalias() += gmat * cmat.transpose();
      MapMat<T> dcmat(dcol.data(), static_cast<Eigen::Index>(g.rows()), cols);
      dcmat.noalias() = wmat.transpose() * gmat;
      col2im(dcol.data(), g, z0, count, gi);
    }
    if (with_bias) {
      for (int c = 0; c < g.cout; ++c) {
        const T* ch = go + static_cast<std::size_t>(c) * g.out_volume();
        T s{0};
        for (std::size_t i = 0; i < g.out_volume(); ++i) s += ch[i];
        r.bias[static_cast<std::size_t>(c)] += s;
      }
    }
  }
  return r;
}

template <typename T>
Conv3d<T>::Conv3d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int pad)
    : Module<T>(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad < 0 ? kernel / 2 : pad) {
  if (in_ < 1 || out_ < 1 || kernel_ < 1 || stride_ < 1) {
    throw InvalidArgument("conv3d '" + this->name() + "' needs positive channels, kernel and stride");
  }
  weight_ = {this->name() + ".weight", Tensor<T>({out_, in_, kernel_, kernel_, kernel_}),
             Tensor<T>({out_, in_, kernel_, kernel_, kernel_})};
  bias_ = {this->name() + ".bias", Tensor<T>({out_}), Tensor<T>({out_})};
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::kTrain) input_ = x;
  return conv3d_forward(x, weight_.value, bias_.value, stride_, pad_);
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& grad) {
  if (input_.empty()) throw ShapeError("conv3d '" + this->name() + "' backward without a training forward");
  ConvGrads<T> g = conv3d_backward(input_, weight_.value, grad, stride_, pad_, true);
  for (std::size_t i = 0; i < g.weight.size(); ++i) weight_.grad[i] += g.weight[i];
  for (std::size_t i = 0; i < g.bias.size(); ++i) bias_.grad[i] += g.bias[i];
  return std::move(g.input);
}

#define COWBIF_CONV_INSTANTIATE(T)                                                            \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                                    int);                                                      \
  template ConvGrads<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        int, int, bool);                                       \
  template class Conv3d<T>;

COWBIF_CONV_INSTANTIATE(float)
COWBIF_CONV_INSTANTIATE(double)

#undef COWBIF_CONV_INSTANTIATE

}  // namespace cowbif::nn
