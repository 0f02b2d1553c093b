#pragma once

// Layer primitives with explicit forward and backward passes.
//
// Forward passes are const and keep no per-call state, so a built graph can
// serve concurrent read-only inference. Backward passes recompute what they
// need (im2col buffers, pooling argmax) from the forward inputs and
// accumulate parameter gradients into the op.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spacenet/rng.hpp"
#include "spacenet/tensor.hpp"

namespace spacenet::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string kind() const = 0;
  virtual Shape4 output_shape(std::span<const Shape4> in) const = 0;
  virtual void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const = 0;
  /// Accumulate into grad_in[i] (skipped when null) and into parameter grads.
  virtual void backward(std::span<const Tensor<T>* const> in, const Tensor<T>& out,
                        const Tensor<T>& grad_out, std::span<Tensor<T>* const> grad_in) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
};

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  int dilation = 1;
  bool bias = true;

  int out_extent(int in) const { return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1; }
};

template <typename T>
class Conv2d final : public Op<T> {
 public:
  explicit Conv2d(ConvSpec spec) : spec_(spec) {
    weight_.name = "weight";
    weight_.value = Tensor<T>(Shape4{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
    weight_.grad = Tensor<T>(weight_.value.shape());
    if (spec.bias) {
      bias_.name = "bias";
      bias_.value = Tensor<T>(Shape4{1, spec.out_channels, 1, 1});
      bias_.grad = Tensor<T>(bias_.value.shape());
    }
  }

  const ConvSpec& spec() const { return spec_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  /// Zero-mean normal weights with the given gain over sqrt(fan_in); zero bias.
  void init_normal(Rng& rng, double gain) {
    const double fan_in = static_cast<double>(spec_.in_channels) * spec_.kernel * spec_.kernel;
    const double std = gain / std::sqrt(fan_in);
    for (auto& v : weight_.value.values()) v = static_cast<T>(std * rng.normal());
    if (spec_.bias) bias_.value.zero();
  }

  std::string kind() const override { return "conv2d"; }

  Shape4 output_shape(std::span<const Shape4> in) const override {
    const Shape4& s = in[0];
    if (s.c != spec_.in_channels)
      throw ShapeError("conv2d expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                       std::to_string(s.c));
    Shape4 out{s.n, spec_.out_channels, spec_.out_extent(s.h), spec_.out_extent(s.w)};
    if (out.h <= 0 || out.w <= 0) throw ShapeError("conv2d output would be empty for input " + to_string(s));
    return out;
  }

  void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const override {
    const Tensor<T>& x = *in[0];
    const Shape4 os = out.shape();
    const int K = patch_size();
    const int P = os.h * os.w;
    ConstMapRM<T> w(weight_.value.data(), spec_.out_channels, K);
    AlignedVector<T> col;
    for (int n = 0; n < x.n(); ++n) {
      MapRM<T> y(out.sample(n), spec_.out_channels, P);
      if (is_pointwise()) {
        y.noalias() = w * ConstMapRM<T>(x.sample(n), K, P);
      } else {
        im2col(x, n, os, col);
        y.noalias() = w * ConstMapRM<T>(col.data(), K, P);
      }
      if (spec_.bias) {
        for (int c = 0; c < spec_.out_channels; ++c) y.row(c).array() += bias_.value.data()[c];
      }
    }
  }

  void backward(std::span<const Tensor<T>* const> in, const Tensor<T>& out, const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grad_in) override {
    const Tensor<T>& x = *in[0];
    const Shape4 os = out.shape();
    const int K = patch_size();
    const int P = os.h * os.w;
    ConstMapRM<T> w(weight_.value.data(), spec_.out_channels, K);
    MapRM<T> gw(weight_.grad.data(), spec_.out_channels, K);
    AlignedVector<T> col, dcol;
    for (int n = 0; n < x.n(); ++n) {
      ConstMapRM<T> gy(grad_out.sample(n), spec_.out_channels, P);
      if (spec_.bias) {
        for (int c = 0; c < spec_.out_channels; ++c) bias_.grad.data()[c] += gy.row(c).sum();
      }
      if (is_pointwise()) {
        ConstMapRM<T> xc(x.sample(n), K, P);
        gw.noalias() += gy * xc.transpose();
        if (grad_in[0]) {
          MapRM<T> gx(grad_in[0]->sample(n), K, P);
          gx.noalias() += w.transpose() * gy;
        }
      } else {
        im2col(x, n, os, col);
        gw.noalias() += gy * ConstMapRM<T>(col.data(), K, P).transpose();
        if (grad_in[0]) {
          dcol.assign(static_cast<std::size_t>(K) * P, T{});
          MapRM<T>(dcol.data(), K, P).noalias() = w.transpose() * gy;
          col2im_add(dcol, os, *grad_in[0], n);
        }
      }
    }
  }

  std::vector<Param<T>*> params() override {
    if (spec_.bias) return {&weight_, &bias_};
    return {&weight_};
  }

 private:
  int patch_size() const { return spec_.in_channels * spec_.kernel * spec_.kernel; }
  bool is_pointwise() const {
    return spec_.kernel == 1 && spec_.stride == 1 && spec_.padding == 0;
  }

  void im2col(const Tensor<T>& x, int n, const Shape4& os, AlignedVector<T>& col) const {
    const int H = x.h(), W = x.w();
    const int k = spec_.kernel, s = spec_.stride, p = spec_.padding, d = spec_.dilation;
    const std::size_t P = static_cast<std::size_t>(os.h) * os.w;
    col.resize(static_cast<std::size_t>(patch_size()) * P);
    T* dst = col.data();
    for (int c = 0; c < spec_.in_channels; ++c) {
      const T* src = x.channel(n, c);
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          for (int oh = 0; oh < os.h; ++oh) {
            const int ih = oh * s - p + ki * d;
            if (ih < 0 || ih >= H) {
              std::fill(dst, dst + os.w, T{});
              dst += os.w;
              continue;
            }
            const T* row = src + static_cast<std::size_t>(ih) * W;
            int iw = -p + kj * d;
            for (int ow = 0; ow < os.w; ++ow, iw += s) *dst++ = (iw >= 0 && iw < W) ? row[iw] : T{};
          }
        }
      }
    }
  }

  void col2im_add(const AlignedVector<T>& dcol, const Shape4& os, Tensor<T>& gx, int n) const {
    const int H = gx.h(), W = gx.w();
    const int k = spec_.kernel, s = spec_.stride, p = spec_.padding, d = spec_.dilation;
    const T* src = dcol.data();
    for (int c = 0; c < spec_.in_channels; ++c) {
      T* dst = gx.channel(n, c);
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          for (int oh = 0; oh < os.h; ++oh) {
            const int ih = oh * s - p + ki * d;
            if (ih < 0 || ih >= H) {
              src += os.w;
              continue;
            }
            T* row = dst + static_cast<std::size_t>(ih) * W;
            int iw = -p + kj * d;
            for (int ow = 0; ow < os.w; ++ow, iw += s, ++src)
              if (iw >= 0 && iw < W) row[iw] += *src;
          }
        }
      }
    }
  }

  ConvSpec spec_;
  Param<T> weight_;
  Param<T> bias_;
};

template <typename T>
class Relu final : public Op<T> {
 public:
  std::string kind() const override { return "relu"; }
  Shape4 output_shape(std::span<const Shape4> in) const override { return in[0]; }
  void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const override {
    const T* x = in[0]->data();
    T* y = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) y[i] = x[i] > T{} ? x[i] : T{};
  }
  void backward(std::span<const Tensor<T>* const> in, const Tensor<T>&, const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grad_in) override {
    if (!grad_in[0]) return;
    const T* x = in[0]->data();
    const T* g = grad_out.data();
    T* gx = grad_in[0]->data();
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
      if (x[i] > T{}) gx[i] += g[i];
  }
};

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2 final : public Op<T> {
 public:
  std::string kind() const override { return "maxpool2"; }
  Shape4 output_shape(std::span<const Shape4> in) const override {
    const Shape4& s = in[0];
    if (s.h < 2 || s.w < 2) throw ShapeError("maxpool2 input too small: " + to_string(s));
    return {s.n, s.c, s.h / 2, s.w / 2};
  }
  void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const override {
    const Tensor<T>& x = *in[0];
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c) {
        const T* src = x.channel(n, c);
        T* dst = out.channel(n, c);
        for (int i = 0; i < out.h(); ++i)
          for (int j = 0; j < out.w(); ++j) dst[i * out.w() + j] = src[argmax_in(src, x.w(), i, j)];
      }
  }
  void backward(std::span<const Tensor<T>* const> in, const Tensor<T>& out, const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grad_in) override {
    if (!grad_in[0]) return;
    const Tensor<T>& x = *in[0];
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c) {
        const T* g = grad_out.channel(n, c);
        T* gx = grad_in[0]->channel(n, c);
        const T* src = x.channel(n, c);
        for (int i = 0; i < out.h(); ++i)
          for (int j = 0; j < out.w(); ++j) gx[argmax_in(src, x.w(), i, j)] += g[i * out.w() + j];
      }
  }

 private:
  static std::size_t argmax_in(const T* src, int W, int i, int j) {
    std::size_t best = static_cast<std::size_t>(2 * i) * W + 2 * j;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) {
        const std::size_t idx = static_cast<std::size_t>(2 * i + di) * W + 2 * j + dj;
        if (src[idx] > src[best]) best = idx;
      }
    return best;
  }
};

/// Bilinear resize to a fixed output extent (half-pixel centres, edge clamp).
template <typename T>
class ResizeBilinear final : public Op<T> {
 public:
  ResizeBilinear(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}

  std::string kind() const override { return "resize_bilinear"; }
  Shape4 output_shape(std::span<const Shape4> in) const override {
    return {in[0].n, in[0].c, out_h_, out_w_};
  }
  void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const override {
    const Tensor<T>& x = *in[0];
    const auto rows = taps(x.h(), out_h_), cols = taps(x.w(), out_w_);
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c) {
        const T* src = x.channel(n, c);
        T* dst = out.channel(n, c);
        for (int i = 0; i < out_h_; ++i) {
          const Tap& r = rows[i];
          const T* r0 = src + static_cast<std::size_t>(r.i0) * x.w();
          const T* r1 = src + static_cast<std::size_t>(r.i1) * x.w();
          for (int j = 0; j < out_w_; ++j) {
            const Tap& q = cols[j];
            const T top = r0[q.i0] * (T{1} - q.t) + r0[q.i1] * q.t;
            const T bot = r1[q.i0] * (T{1} - q.t) + r1[q.i1] * q.t;
            dst[i * out_w_ + j] = top * (T{1} - r.t) + bot * r.t;
          }
        }
      }
  }
  void backward(std::span<const Tensor<T>* const> in, const Tensor<T>& out, const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grad_in) override {
    if (!grad_in[0]) return;
    const Tensor<T>& x = *in[0];
    const auto rows = taps(x.h(), out_h_), cols = taps(x.w(), out_w_);
    for (int n = 0; n < out.n(); ++n)
      for (int c = 0; c < out.c(); ++c) {
        const T* g = grad_out.channel(n, c);
        T* gx = grad_in[0]->channel(n, c);
        for (int i = 0; i < out_h_; ++i) {
          const Tap& r = rows[i];
          T* r0 = gx + static_cast<std::size_t>(r.i0) * x.w();
          T* r1 = gx + static_cast<std::size_t>(r.i1) * x.w();
          for (int j = 0; j < out_w_; ++j) {
            const Tap& q = cols[j];
            const T v = g[i * out_w_ + j];
            r0[q.i0] += v * (T{1} - r.t) * (T{1} - q.t);
            r0[q.i1] += v * (T{1} - r.t) * q.t;
            r1[q.i0] += v * r.t * (T{1} - q.t);
            r1[q.i1] += v * r.t * q.t;
          }
        }
      }
  }

 private:
  struct Tap {
    int i0 = 0, i1 = 0;
    T t = T{};
  };
  static std::vector<Tap> taps(int in, int out) {
    std::vector<Tap> v(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      int i0 = static_cast<int>(src);
      if (i0 > in - 1) i0 = in - 1;
      const int i1 = std::min(i0 + 1, in - 1);
      v[o] = {i0, i1, static_cast<T>(src - i0)};
    }
    return v;
  }

  int out_h_, out_w_;
};

template <typename T>
class Concat final : public Op<T> {
 public:
  std::string kind() const override { return "concat"; }
  Shape4 output_shape(std::span<const Shape4> in) const override {
    Shape4 out = in[0];
    out.c = 0;
    for (const auto& s : in) {
      if (s.n != in[0].n || s.h != in[0].h || s.w != in[0].w)
        throw ShapeError("concat inputs differ: " + to_string(s) + " vs " + to_string(in[0]));
      out.c += s.c;
    }
    return out;
  }
  void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const override {
    for (int n = 0; n < out.n(); ++n) {
      T* dst = out.sample(n);
      for (const Tensor<T>* t : in) dst = std::copy_n(t->sample(n), t->sample_size(), dst);
    }
  }
  void backward(std::span<const Tensor<T>* const> in, const Tensor<T>& out, const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grad_in) override {
    for (int n = 0; n < out.n(); ++n) {
      const T* src = grad_out.sample(n);
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t len = in[k]->sample_size();
        if (grad_in[k]) {
          T* dst = grad_in[k]->sample(n);
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        src += len;
      }
    }
  }
};

template <typename T>
class Add final : public Op<T> {
 public:
  std::string kind() const override { return "add"; }
  Shape4 output_shape(std::span<const Shape4> in) const override {
    for (const auto& s : in)
      if (!(s == in[0])) throw ShapeError("add inputs differ: " + to_string(s) + " vs " + to_string(in[0]));
    return in[0];
  }
  void forward(std::span<const Tensor<T>* const> in, Tensor<T>& out) const override {
    std::copy_n(in[0]->data(), out.numel(), out.data());
    for (std::size_t k = 1; k < in.size(); ++k) out += *in[k];
  }
  void backward(std::span<const Tensor<T>* const> in, const Tensor<T>&, const Tensor<T>& grad_out,
                std::span<Tensor<T>* const> grad_in) override {
    for (std::size_t k = 0; k < in.size(); ++k)
      if (grad_in[k]) *grad_in[k] += grad_out;
  }
};

}  // namespace spacenet::nn
