#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "spacenet/spacemask.hpp"
#include "spacenet/tensor.hpp"

namespace spacenet {

// --- waviness --------------------------------------------------------------------

struct Profile1D {
  std::vector<double> values;
  std::string origin;  ///< where the profile came from, e.g. "last_hidden/c3/horizontal/mean"

  std::size_t length() const { return values.size(); }
};

struct Extremum {
  double index = 0.0;  ///< plateau midpoint; profile ends sit at 0 and L-1
  double value = 0.0;
  bool boundary = false;
};

struct EffectiveInterval {
  int first = 0;  ///< index into WavinessReport::extrema
  int second = 0;
  double start = 0.0;
  double end = 0.0;
  double lambda = 0.0;
};

struct WavinessReport {
  double waviness = 0.0;
  double threshold = 0.1;
  double global_diff = 0.0;
  std::size_t length = 0;
  std::vector<Extremum> extrema;
  std::vector<double> local_diffs;  ///< value(extremum n+1) - value(extremum n)
  std::vector<EffectiveInterval> effective_intervals;
};

inline void to_json(nlohmann::json& j, const WavinessReport& r) {
  j = nlohmann::json{{"waviness", r.waviness},
                     {"threshold", r.threshold},
                     {"global_diff", r.global_diff},
                     {"length", r.length},
                     {"local_diffs", r.local_diffs}};
  auto& ex = j["extrema"] = nlohmann::json::array();
  for (const auto& e : r.extrema)
    ex.push_back({{"index", e.index}, {"value", e.value}, {"boundary", e.boundary}});
  auto& iv = j["effective_intervals"] = nlohmann::json::array();
  for (const auto& i : r.effective_intervals)
    iv.push_back({{"start", i.start}, {"end", i.end}, {"lambda", i.lambda}});
}

/// Fraction of the profile covered by alternating significant crests and troughs.
///
/// Extrema are the strict interior local extrema (equal-valued runs collapse
/// to their midpoint) plus both profile ends. Consecutive extrema bound an
/// interval with local difference Ab(n); it is significant when
/// |Ab(n)| / (max - min) > T. An interior interval is effective when it is
/// significant and an adjacent interval is significant with the opposite
/// sign. An interval touching a profile end is effective when it is
/// significant and its interior neighbour is effective, so a partial half-wave
/// at either end of a wave train counts but an isolated bump does not.
/// waviness = sum of effective interval lengths / L, clamped to [0, 1].
inline WavinessReport waviness(const Profile1D& profile, double threshold = 0.1) {
  const auto& v = profile.values;
  const std::size_t L = v.size();
  if (L < 3) throw ConfigError("waviness needs a profile of length >= 3, got " + std::to_string(L));
  for (double x : v)
    if (!std::isfinite(x)) throw ConfigError("waviness: profile contains non-finite values");

  WavinessReport r;
  r.threshold = threshold;
  r.length = L;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  r.global_diff = *hi - *lo;
  if (r.global_diff <= 0.0) return r;

  struct Run {
    std::size_t first, last;
    double value;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < L; ++i) {
    if (!runs.empty() && v[i] == runs.back().value)
      runs.back().last = i;
    else
      runs.push_back({i, i, v[i]});
  }
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const Run& run = runs[k];
    if (k == 0) {
      r.extrema.push_back({0.0, run.value, true});
    } else if (k + 1 == runs.size()) {
      r.extrema.push_back({static_cast<double>(L - 1), run.value, true});
    } else {
      const double prev = runs[k - 1].value, next = runs[k + 1].value;
      if ((run.value > prev && run.value > next) || (run.value < prev && run.value < next))
        r.extrema.push_back({0.5 * static_cast<double>(run.first + run.last), run.value, false});
    }
  }

  const std::size_t n_int = r.extrema.size() - 1;
  std::vector<bool> significant(n_int), effective(n_int, false);
  auto sign = [](double x) { return (x > 0) - (x < 0); };
  for (std::size_t n = 0; n < n_int; ++n) {
    r.local_diffs.push_back(r.extrema[n + 1].value - r.extrema[n].value);
    significant[n] = std::abs(r.local_diffs[n] / r.global_diff) > threshold;
  }
  auto touches_end = [&](std::size_t n) { return r.extrema[n].boundary || r.extrema[n + 1].boundary; };
  auto alternates = [&](std::size_t a, std::size_t b) {
    return significant[b] && sign(r.local_diffs[a]) + sign(r.local_diffs[b]) == 0;
  };
  for (std::size_t n = 0; n < n_int; ++n) {
    if (!significant[n] || touches_end(n)) continue;
    effective[n] = (n > 0 && alternates(n, n - 1)) || (n + 1 < n_int && alternates(n, n + 1));
  }
  for (std::size_t n = 0; n < n_int; ++n) {
    if (!significant[n] || !touches_end(n)) continue;
    effective[n] = (n > 0 && !touches_end(n - 1) && effective[n - 1]) ||
                   (n + 1 < n_int && !touches_end(n + 1) && effective[n + 1]);
  }

  double total = 0.0;
  for (std::size_t n = 0; n < n_int; ++n) {
    if (!effective[n]) continue;
    const double a = r.extrema[n].index, b = r.extrema[n + 1].index;
    r.effective_intervals.push_back({static_cast<int>(n), static_cast<int>(n + 1), a, b, b - a});
    total += b - a;
  }
  r.waviness = std::clamp(total / static_cast<double>(L), 0.0, 1.0);
  return r;
}

// --- spatial position accuracy -----------------------------------------------------

/// How object/background accuracies are weighted. `as_printed` pairs Acc_o
/// with B/X and Acc_b with O/X; `swapped` pairs Acc_o with O/X.
enum class AccWeighting { as_printed, swapped };

inline const char* to_string(AccWeighting w) { return w == AccWeighting::as_printed ? "as_printed" : "swapped"; }
inline AccWeighting parse_acc_weighting(std::string_view s) {
  if (s == "as_printed") return AccWeighting::as_printed;
  if (s == "swapped") return AccWeighting::swapped;
  throw ConfigError("unknown acc_space weighting '" + std::string(s) + "' (expected as_printed, swapped)");
}

struct AccParts {
  double acc_object = 1.0;      ///< 1 when the label has no object pixels
  double acc_background = 1.0;  ///< 1 when the label has no background pixels
  std::size_t objects = 0;
  std::size_t total = 0;
  double value = 0.0;
};

inline AccParts acc_space_direction(const ClassMap& pred, const ClassMap& label,
                                    AccWeighting weighting = AccWeighting::as_printed) {
  if (pred.size() != label.size())
    throw ShapeError("prediction " + to_string(pred.size()) + " and label " + to_string(label.size()) +
                     " differ in size");
  AccParts p;
  p.total = label.count();
  std::size_t obj_ok = 0, bg_ok = 0;
  for (std::size_t i = 0; i < label.count(); ++i) {
    const int y = label.values()[i];
    const bool ok = pred.values()[i] == y;
    if (y > 0) {
      ++p.objects;
      obj_ok += ok;
    } else {
      bg_ok += ok;
    }
  }
  const std::size_t bgs = p.total - p.objects;
  if (p.objects > 0) p.acc_object = static_cast<double>(obj_ok) / static_cast<double>(p.objects);
  if (bgs > 0) p.acc_background = static_cast<double>(bg_ok) / static_cast<double>(bgs);
  if (p.total == 0) return p;
  const double o = static_cast<double>(p.objects) / static_cast<double>(p.total);
  const double b = static_cast<double>(bgs) / static_cast<double>(p.total);
  p.value = weighting == AccWeighting::as_printed ? b * p.acc_object + o * p.acc_background
                                                  : o * p.acc_object + b * p.acc_background;
  return p;
}

/// Direction-averaged Acc_space of one image.
inline double acc_space(const ClassMap& pred_h, const ClassMap& pred_v, const ProxyLabel& label,
                        AccWeighting weighting = AccWeighting::as_printed) {
  return 0.5 * (acc_space_direction(pred_h, label.horizontal, weighting).value +
                acc_space_direction(pred_v, label.vertical, weighting).value);
}

/// Per-pixel argmax over channels of sample `n`; ties go to the lowest class.
template <typename T>
ClassMap argmax_classes(const Tensor<T>& logits, int n) {
  ClassMap out(Size{logits.h(), logits.w()});
  const std::size_t P = logits.shape().plane();
  const T* base = logits.sample(n);
  for (std::size_t m = 0; m < P; ++m) {
    int best = 0;
    for (int c = 1; c < logits.c(); ++c)
      if (base[c * P + m] > base[best * P + m]) best = c;
    out.values()[m] = best;
  }
  return out;
}

}  // namespace spacenet
