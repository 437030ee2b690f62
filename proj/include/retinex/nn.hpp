#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <stdexcept>
#include <vector>

#include "retinex/image.hpp"

/// Minimal CPU building blocks for the decomposition network: planar tensors,
/// convolutions lowered to GEMM, and the pointwise/pooling ops with their
/// backward passes. Everything here is single-image (no batch axis).
namespace retinex::nn {

/// C x H x W planar float tensor.
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  float* channel(int k) { return data.data() + k * plane(); }
  const float* channel(int k) const { return data.data() + k * plane(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0f); }
};

using MatrixMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatrixMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// A named parameter array with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  std::size_t size() const { return value.size(); }
};

/// Owns every parameter of a network in creation order.
class ParamStore {
 public:
  int add(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    params_.push_back(Param{std::move(name), std::move(shape), std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)});
    return static_cast<int>(params_.size()) - 1;
  }
  Param& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  const Param& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

 private:
  std::vector<Param> params_;
};

inline constexpr float kLeakySlope = 0.1f;

inline void leaky_relu_inplace(Tensor& t) {
  for (auto& v : t.data) v = v > 0.0f ? v : kLeakySlope * v;
}

/// Backward through a leaky ReLU given its output (sign is preserved by the op).
inline void leaky_relu_backward(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(out.data[i] > 0.0f)) grad.data[i] *= kLeakySlope;
  }
}

/// 3x3 (padding 1) or 1x1 convolution, stride 1.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels, int kernel)
      : in_(in_channels), out_(out_channels), k_(kernel) {
    weight_ = store.add(name + ".weight", {out_channels, in_channels, kernel, kernel});
    bias_ = store.add(name + ".bias", {out_channels});
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int weight_index() const { return weight_; }
  int bias_index() const { return bias_; }

  /// He-normal weights scaled by `gain`, bias set to `bias`.
  void init(ParamStore& store, std::mt19937_64& rng, float gain = 1.0f, float bias = 0.0f) const {
    const double fan_in = static_cast<double>(in_) * k_ * k_;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : store[weight_].value) w = static_cast<float>(gain * dist(rng));
    std::fill(store[bias_].value.begin(), store[bias_].value.end(), bias);
  }

  void forward(const ParamStore& store, const Tensor& in, Tensor& out, std::vector<float>& col) const {
    const int hw = in.h * in.w;
    out = Tensor(out_, in.h, in.w);
    const ConstMatrixMap wmat(store[weight_].value.data(), out_, in_ * k_ * k_);
    MatrixMap omat(out.data.data(), out_, hw);
    if (k_ == 1) {
      omat.noalias() = wmat * ConstMatrixMap(in.data.data(), in_, hw);
    } else {
      im2col(in, col);
      omat.noalias() = wmat * ConstMatrixMap(col.data(), in_ * 9, hw);
    }
    const auto& b = store[bias_].value;
    for (int o = 0; o < out_; ++o) {
      float* p = out.channel(o);
      for (int i = 0; i < hw; ++i) p[i] += b[o];
    }
  }

  /// Accumulates parameter gradients; writes (overwrites) the input gradient when `grad_in` is non-null.
  void backward(ParamStore& store, const Tensor& in, const Tensor& grad_out, Tensor* grad_in,
                std::vector<float>& col) const {
    const int hw = in.h * in.w;
    const int kdim = in_ * k_ * k_;
    const ConstMatrixMap gmat(grad_out.data.data(), out_, hw);
    MatrixMap dw(store[weight_].grad.data(), out_, kdim);
    if (k_ == 1) {
      dw.noalias() += gmat * ConstMatrixMap(in.data.data(), in_, hw).transpose();
    } else {
      im2col(in, col);
      dw.noalias() += gmat * ConstMatrixMap(col.data(), kdim, hw).transpose();
    }
    auto& db = store[bias_].grad;
    for (int o = 0; o < out_; ++o) {
      const float* g = grad_out.channel(o);
      double s = 0.0;
      for (int i = 0; i < hw; ++i) s += g[i];
      db[o] += static_cast<float>(s);
    }
    if (grad_in == nullptr) return;
    *grad_in = Tensor(in_, in.h, in.w);
    const ConstMatrixMap wmat(store[weight_].value.data(), out_, kdim);
    if (k_ == 1) {
      MatrixMap(grad_in->data.data(), in_, hw).noalias() = wmat.transpose() * gmat;
    } else {
      col.resize(static_cast<std::size_t>(kdim) * hw);
      MatrixMap(col.data(), kdim, hw).noalias() = wmat.transpose() * gmat;
      col2im(col, *grad_in);
    }
  }

 private:
  // col[(ci*9 + ky*3 + kx) * HW + y*W + x] = in[ci, y+ky-1, x+kx-1] (zero outside)
  void im2col(const Tensor& in, std::vector<float>& col) const {
    const int h = in.h, w = in.w;
    const std::size_t hw = in.plane();
    col.resize(static_cast<std::size_t>(in.c) * 9 * hw);
    for (int ci = 0; ci < in.c; ++ci) {
      const float* src = in.channel(ci);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          float* dst = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
          const int dx = kx - 1;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            float* row = dst + static_cast<std::size_t>(y) * w;
            if (sy < 0 || sy >= h) {
              std::fill(row, row + w, 0.0f);
              continue;
            }
            const float* srow = src + static_cast<std::size_t>(sy) * w;
            const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
            if (x0 > 0) row[0] = 0.0f;
            if (x1 < w) row[w - 1] = 0.0f;
            std::memcpy(row + x0, srow + x0 + dx, sizeof(float) * static_cast<std::size_t>(x1 - x0));
          }
        }
      }
    }
  }

  void col2im(const std::vector<float>& col, Tensor& out) const {
    const int h = out.h, w = out.w;
    const std::size_t hw = out.plane();
    for (int ci = 0; ci < out.c; ++ci) {
      float* dst = out.channel(ci);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const float* src = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
          const int dx = kx - 1;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            const float* row = src + static_cast<std::size_t>(y) * w;
            float* drow = dst + static_cast<std::size_t>(sy) * w;
            const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
            for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
          }
        }
      }
    }
  }

  int in_ = 0;
  int out_ = 0;
  int k_ = 3;
  int weight_ = -1;
  int bias_ = -1;
};

/// Fully connected layer on a flat vector.
class Dense {
 public:
  Dense() = default;
  Dense(ParamStore& store, const std::string& name, int in, int out) : in_(in), out_(out) {
    weight_ = store.add(name + ".weight", {out, in});
    bias_ = store.add(name + ".bias", {out});
  }

  void init(ParamStore& store, std::mt19937_64& rng, float gain = 1.0f, float bias = 0.0f) const {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in_));
    for (auto& w : store[weight_].value) w = static_cast<float>(gain * dist(rng));
    std::fill(store[bias_].value.begin(), store[bias_].value.end(), bias);
  }

  /// Explicit row-major weights.
  void init(ParamStore& store, const std::vector<float>& weights, float bias = 0.0f) const {
    if (weights.size() != store[weight_].value.size()) throw std::invalid_argument("Dense::init: weight count");
    store[weight_].value = weights;
    std::fill(store[bias_].value.begin(), store[bias_].value.end(), bias);
  }

  std::vector<float> forward(const ParamStore& store, const std::vector<float>& x) const {
    const auto& w = store[weight_].value;
    const auto& b = store[bias_].value;
    std::vector<float> y(static_cast<std::size_t>(out_));
    for (int o = 0; o < out_; ++o) {
      double s = b[o];
      for (int i = 0; i < in_; ++i) s += static_cast<double>(w[o * in_ + i]) * x[i];
      y[o] = static_cast<float>(s);
    }
    return y;
  }

  std::vector<float> backward(ParamStore& store, const std::vector<float>& x, const std::vector<float>& gy) const {
    auto& gw = store[weight_].grad;
    auto& gb = store[bias_].grad;
    const auto& w = store[weight_].value;
    std::vector<float> gx(static_cast<std::size_t>(in_), 0.0f);
    for (int o = 0; o < out_; ++o) {
      gb[o] += gy[o];
      for (int i = 0; i < in_; ++i) {
        gw[o * in_ + i] += gy[o] * x[i];
        gx[i] += w[o * in_ + i] * gy[o];
      }
    }
    return gx;
  }

 private:
  int in_ = 0;
  int out_ = 0;
  int weight_ = -1;
  int bias_ = -1;
};

inline Tensor avg_pool2(const Tensor& in) {
  Tensor out(in.c, in.h / 2, in.w / 2);
  for (int k = 0; k < in.c; ++k) {
    const float* s = in.channel(k);
    float* d = out.channel(k);
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const float* p = s + static_cast<std::size_t>(2 * y) * in.w + 2 * x;
        d[y * out.w + x] = 0.25f * (p[0] + p[1] + p[in.w] + p[in.w + 1]);
      }
    }
  }
  return out;
}

/// Adds the pooling gradient into `grad_in` (which must already have the input shape).
inline void avg_pool2_backward(const Tensor& grad_out, Tensor& grad_in) {
  for (int k = 0; k < grad_out.c; ++k) {
    const float* g = grad_out.channel(k);
    float* d = grad_in.channel(k);
    for (int y = 0; y < grad_out.h; ++y) {
      for (int x = 0; x < grad_out.w; ++x) {
        const float v = 0.25f * g[y * grad_out.w + x];
        float* p = d + static_cast<std::size_t>(2 * y) * grad_in.w + 2 * x;
        p[0] += v;
        p[1] += v;
        p[grad_in.w] += v;
        p[grad_in.w + 1] += v;
      }
    }
  }
}

/// Nearest-neighbour x2 upsampling written into channels [offset, offset + in.c) of `out`.
inline void upsample2_into(const Tensor& in, Tensor& out, int offset) {
  for (int k = 0; k < in.c; ++k) {
    const float* s = in.channel(k);
    float* d = out.channel(offset + k);
    for (int y = 0; y < out.h; ++y) {
      const float* srow = s + static_cast<std::size_t>(y / 2) * in.w;
      float* drow = d + static_cast<std::size_t>(y) * out.w;
      for (int x = 0; x < out.w; ++x) drow[x] = srow[x / 2];
    }
  }
}

/// Gradient of upsample2_into: sums each 2x2 block of channels [offset, offset + grad_in.c).
inline void upsample2_backward(const Tensor& grad_out, int offset, Tensor& grad_in) {
  grad_in.zero();
  for (int k = 0; k < grad_in.c; ++k) {
    const float* g = grad_out.channel(offset + k);
    float* d = grad_in.channel(k);
    for (int y = 0; y < grad_out.h; ++y) {
      const float* grow = g + static_cast<std::size_t>(y) * grad_out.w;
      float* drow = d + static_cast<std::size_t>(y / 2) * grad_in.w;
      for (int x = 0; x < grad_out.w; ++x) drow[x / 2] += grow[x];
    }
  }
}

inline void copy_channels(const Tensor& src, Tensor& dst, int offset) {
  std::copy(src.data.begin(), src.data.end(), dst.data.begin() + static_cast<std::ptrdiff_t>(offset * dst.plane()));
}

inline void add_channels(const Tensor& src, int offset, Tensor& dst) {
  const float* s = src.data.data() + offset * src.plane();
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s[i];
}

inline float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }

inline float softplus(float z) { return z > 20.0f ? z : std::log1p(std::exp(z)); }

inline float softplus_inverse(float y) { return std::log(std::expm1(y)); }

}  // namespace retinex::nn
