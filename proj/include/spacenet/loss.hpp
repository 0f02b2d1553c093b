#pragma once

// Class-balanced pixel-wise cross-entropy over the two direction heads.
//
// For a label map with X pixels, O object pixels (class > 0) and B = X - O
// background pixels, background pixels weigh O/X and object pixels B/X.
// Each direction's loss is the w-weighted mean of per-pixel cross-entropy;
// the two directions are averaged and the batch loss is the mean over images.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spacenet/spacemask.hpp"
#include "spacenet/tensor.hpp"

namespace spacenet {

struct BalanceWeights {
  double background = 0.0;  ///< O/X
  double object = 0.0;      ///< B/X
  std::size_t objects = 0;
  std::size_t total = 0;

  double weight_sum() const {
    return background * static_cast<double>(total - objects) + object * static_cast<double>(objects);
  }
};

inline BalanceWeights balance_weights(const ClassMap& label) {
  BalanceWeights w;
  w.total = label.count();
  w.objects = count_nonzero(label);
  if (w.total == 0) return w;
  const double X = static_cast<double>(w.total);
  w.background = static_cast<double>(w.objects) / X;
  w.object = static_cast<double>(w.total - w.objects) / X;
  return w;
}

/// Per-pixel weight map w(m).
inline Grid<double> weight_map(const ClassMap& label) {
  const BalanceWeights bw = balance_weights(label);
  Grid<double> out(label.size());
  for (std::size_t i = 0; i < label.count(); ++i)
    out.values()[i] = label.values()[i] > 0 ? bw.object : bw.background;
  return out;
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_h;  ///< d loss / d logits_h (empty unless requested)
  Tensor<T> grad_v;
};

namespace detail {

// Weighted CE for one (image, direction); returns the loss and, when `grad`
// is non-null, writes scale · dL/dlogits into it.
template <typename T>
double direction_loss(const Tensor<T>& logits, int n, const ClassMap& label, T* grad, double scale) {
  const int C = logits.c();
  const std::size_t P = logits.shape().plane();
  if (label.count() != P)
    throw ShapeError("label " + to_string(label.size()) + " does not match logits " +
                     to_string(logits.shape()));
  BalanceWeights bw = balance_weights(label);
  double wsum = bw.weight_sum();
  // A label map that is all background (or all object) zeroes every weight;
  // fall back to an unweighted mean so the loss stays defined.
  if (wsum <= 0.0) {
    bw.background = bw.object = 1.0;
    wsum = static_cast<double>(P);
  }
  const T* base = logits.sample(n);
  std::vector<double> prob(static_cast<std::size_t>(C));
  double total = 0.0;
  for (std::size_t m = 0; m < P; ++m) {
    const int y = label.values()[m];
    if (y < 0 || y >= C)
      throw ShapeError("label class " + std::to_string(y) + " outside head with " + std::to_string(C) +
                       " channels");
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(base[c * P + m]));
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      prob[c] = std::exp(static_cast<double>(base[c * P + m]) - mx);
      z += prob[c];
    }
    const double w = (y > 0 ? bw.object : bw.background) / wsum;
    total += w * (std::log(z) + mx - static_cast<double>(base[y * P + m]));
    if (grad) {
      for (int c = 0; c < C; ++c) {
        const double d = prob[c] / z - (c == y ? 1.0 : 0.0);
        grad[c * P + m] = static_cast<T>(scale * w * d);
      }
    }
  }
  return total;
}

}  // namespace detail

template <typename T>
LossResult<T> weighted_ce_loss(const Tensor<T>& logits_h, const Tensor<T>& logits_v,
                               std::span<const ProxyLabel> labels, bool with_grad = true) {
  if (logits_h.n() != static_cast<int>(labels.size()) || logits_v.n() != static_cast<int>(labels.size()))
    throw ShapeError("batch of " + std::to_string(labels.size()) + " labels does not match logits " +
                     to_string(logits_h.shape()));
  if (logits_h.h() != logits_v.h() || logits_h.w() != logits_v.w())
    throw ShapeError("direction heads differ in spatial size");
  LossResult<T> r;
  if (with_grad) {
    r.grad_h = Tensor<T>(logits_h.shape());
    r.grad_v = Tensor<T>(logits_v.shape());
  }
  const double per_image = 1.0 / static_cast<double>(labels.size());
  const double scale = 0.5 * per_image;
  for (int n = 0; n < logits_h.n(); ++n) {
    const ProxyLabel& lab = labels[static_cast<std::size_t>(n)];
    const double lh = detail::direction_loss(logits_h, n, lab.horizontal,
                                             with_grad ? r.grad_h.sample(n) : nullptr, scale);
    const double lv = detail::direction_loss(logits_v, n, lab.vertical,
                                             with_grad ? r.grad_v.sample(n) : nullptr, scale);
    r.loss += 0.5 * (lh + lv) * per_image;
  }
  return r;
}

template <typename T>
LossResult<T> weighted_ce_loss(const Tensor<T>& logits_h, const Tensor<T>& logits_v, const ProxyLabel& label,
                               bool with_grad = true) {
  return weighted_ce_loss(logits_h, logits_v, std::span<const ProxyLabel>(&label, 1), with_grad);
}

}  // namespace spacenet
