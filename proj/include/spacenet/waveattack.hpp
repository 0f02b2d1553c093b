#pragma once

// Grating perturbations and a black-box grid search over their wavelength,
// orientation and phase.
//
// Coordinates: x is the column, y the row, and pixel (y, x) is sampled at its
// centre (x + 0.5, y + 0.5). The grating coordinate is
//   u = (x + 0.5)·cos θ + (y + 0.5)·sin θ + φ
// and the square wave is +ε where frac(u / λ) < 0.5 and −ε elsewhere, i.e.
// the sign of sin(2πu/λ) with zero crossings assigned to the crest.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "spacenet/dataio.hpp"
#include "spacenet/metrics.hpp"
#include "spacenet/network.hpp"
#include "spacenet/plot.hpp"

namespace spacenet {

class AttackError : public Error {
 public:
  using Error::Error;
};

enum class Waveform { square, sine };

inline const char* to_string(Waveform w) { return w == Waveform::square ? "square" : "sine"; }
inline Waveform parse_waveform(std::string_view s) {
  if (s == "square") return Waveform::square;
  if (s == "sine") return Waveform::sine;
  throw ConfigError("unknown waveform '" + std::string(s) + "' (expected square, sine)");
}

struct WavePerturbation {
  double wavelength = 8.0;  ///< pixels
  double theta = 0.0;       ///< degrees in [0, 180)
  double phase = 0.0;       ///< pixels
  double amplitude = 8.0;   ///< intensity units on a 0-255 scale
  Waveform waveform = Waveform::square;
};

namespace detail {

// cos/sin of an angle in degrees, exact at multiples of 90°.
inline std::pair<double, double> cos_sin_deg(double deg) {
  const double r = std::fmod(deg, 360.0);
  const double q = r < 0 ? r + 360.0 : r;
  if (q == 0.0) return {1.0, 0.0};
  if (q == 90.0) return {0.0, 1.0};
  if (q == 180.0) return {-1.0, 0.0};
  if (q == 270.0) return {0.0, -1.0};
  const double rad = q * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

}  // namespace detail

inline Grid<double> make_wave(Size size, const WavePerturbation& p) {
  if (!(p.wavelength >= 2.0))
    throw ConfigError("wavelength must be >= 2 pixels, got " + std::to_string(p.wavelength));
  if (!(p.amplitude >= 0.0)) throw ConfigError("amplitude must be non-negative");
  Grid<double> field(size);
  const auto [c, s] = detail::cos_sin_deg(p.theta);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      const double u = (x + 0.5) * c + (y + 0.5) * s + p.phase;
      const double t = u / p.wavelength;
      if (p.waveform == Waveform::square)
        field(y, x) = (t - std::floor(t)) < 0.5 ? p.amplitude : -p.amplitude;
      else
        field(y, x) = p.amplitude * std::sin(2.0 * std::numbers::pi * t);
    }
  }
  return field;
}

inline constexpr double kIntensityMax = 255.0;

/// Add `field` and clip to [0, 255]. Integer images round to nearest, with
/// the change capped at ⌊|field|⌋ so the L∞ bound holds.
template <typename P>
Grid<P> apply_perturbation(const Grid<P>& image, const Grid<double>& field) {
  if (image.size() != field.size())
    throw ShapeError("image " + to_string(image.size()) + " and perturbation " + to_string(field.size()) +
                     " differ in size");
  Grid<P> out(image.size());
  for (std::size_t i = 0; i < image.count(); ++i) {
    const double x = static_cast<double>(image.values()[i]);
    const double f = field.values()[i];
    double v;
    if constexpr (std::is_integral_v<P>) {
      const double cap = std::floor(std::abs(f));
      v = x + std::clamp(std::nearbyint(f), -cap, cap);
    } else {
      v = x + f;
    }
    out.values()[i] = static_cast<P>(std::clamp(v, 0.0, kIntensityMax));
  }
  return out;
}

// --- adapters ----------------------------------------------------------------------

/// Black-box boundary for an attacked model. `predict` sees intensity images
/// on the 0-255 scale and must not mutate them; `metric` scores its outputs
/// against the references, higher is better.
template <typename Output, typename Reference>
struct ModelAdapter {
  std::string metric_name;
  std::function<Output(std::span<const Grid<double>>)> predict;
  std::function<double(const Output&, std::span<const Reference>)> metric;
};

template <typename Reference>
struct AttackDataset {
  std::vector<Grid<double>> images;  ///< 0-255 intensities
  std::vector<Reference> references;
};

struct PredictedClasses {
  std::vector<ClassMap> horizontal;
  std::vector<ClassMap> vertical;
};

/// Skeleton images at 0/255 paired with their proxy labels.
inline AttackDataset<ProxyLabel> attack_dataset_from_split(const DatasetSplit& split, const MaskPair& masks) {
  AttackDataset<ProxyLabel> ds;
  for (const auto& s : split.samples) {
    Grid<double> img(s.pixels.size());
    for (std::size_t i = 0; i < img.count(); ++i) img.values()[i] = s.pixels.values()[i] ? kIntensityMax : 0.0;
    ds.images.push_back(std::move(img));
    ds.references.push_back(make_proxy_label(s, masks));
  }
  return ds;
}

/// Adapter around a position-code model: inputs are scaled by 1/255, the
/// metric is mean Acc_space over the dataset.
template <typename T>
ModelAdapter<PredictedClasses, ProxyLabel> make_spacenet_adapter(const Model<T>& model,
                                                                 AccWeighting weighting = AccWeighting::as_printed,
                                                                 int batch_size = 16) {
  ModelAdapter<PredictedClasses, ProxyLabel> a;
  a.metric_name = "acc_space";
  a.predict = [&model, batch_size](std::span<const Grid<double>> images) {
    PredictedClasses out;
    for (std::size_t s = 0; s < images.size(); s += static_cast<std::size_t>(batch_size)) {
      const std::size_t e = std::min(images.size(), s + static_cast<std::size_t>(batch_size));
      const Tensor<T> x = stack_planes<T>(images.subspan(s, e - s), static_cast<T>(1.0 / kIntensityMax));
      const auto y = model.forward(x);
      for (int n = 0; n < x.n(); ++n) {
        out.horizontal.push_back(argmax_classes(y.logits_h, n));
        out.vertical.push_back(argmax_classes(y.logits_v, n));
      }
    }
    return out;
  };
  a.metric = [weighting](const PredictedClasses& p, std::span<const ProxyLabel> refs) {
    if (p.horizontal.size() != refs.size()) throw ShapeError("prediction count does not match references");
    double total = 0.0;
    for (std::size_t i = 0; i < refs.size(); ++i)
      total += acc_space(p.horizontal[i], p.vertical[i], refs[i], weighting);
    return total / static_cast<double>(refs.size());
  };
  return a;
}

/// Synthetic oracle that is most sensitive to one grating. For each image it
/// measures R, the phase-invariant amplitude of the image's projection onto
/// a sine grating of the given wavelength and orientation (mean-removed,
/// normalised by pixel count), and scores 1 / (1 + R), averaged over images.
/// The score falls monotonically as the matching grating's amplitude grows.
inline ModelAdapter<std::vector<double>, int> make_resonant_adapter(double wavelength, double theta) {
  ModelAdapter<std::vector<double>, int> a;
  a.metric_name = "resonance";
  a.predict = [wavelength, theta](std::span<const Grid<double>> images) {
    std::vector<double> response;
    const auto [c, s] = detail::cos_sin_deg(theta);
    for (const auto& img : images) {
      double mean = 0.0;
      for (double v : img) mean += v;
      mean /= static_cast<double>(std::max<std::size_t>(img.count(), 1));
      double re = 0.0, im = 0.0;
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
          const double arg = 2.0 * std::numbers::pi * ((x + 0.5) * c + (y + 0.5) * s) / wavelength;
          const double v = img(y, x) - mean;
          re += v * std::cos(arg);
          im += v * std::sin(arg);
        }
      response.push_back(2.0 * std::hypot(re, im) / static_cast<double>(img.count()));
    }
    return response;
  };
  a.metric = [](const std::vector<double>& r, std::span<const int>) {
    double total = 0.0;
    for (double v : r) total += 1.0 / (1.0 + v);
    return total / static_cast<double>(std::max<std::size_t>(r.size(), 1));
  };
  return a;
}

// --- search ------------------------------------------------------------------------

struct AttackGrid {
  std::vector<double> wavelengths{2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64};
  std::vector<double> thetas{0, 15, 30, 45, 60, 75, 90, 105, 120, 135, 150, 165};
  std::vector<double> phase_fractions{0.0, 0.25, 0.5, 0.75};  ///< φ = fraction · λ

  std::size_t size() const { return wavelengths.size() * thetas.size() * phase_fractions.size(); }
};

struct AttackPoint {
  double wavelength = 0.0;
  double theta = 0.0;
  double phase = 0.0;
  double score = 0.0;

  friend bool operator==(const AttackPoint&, const AttackPoint&) = default;
};

struct AttackResult {
  std::vector<AttackPoint> grid;  ///< ordered by (λ, θ, φ) ascending
  AttackPoint strongest;          ///< lowest score
  AttackPoint weakest;            ///< highest score
  double baseline_score = 0.0;
  std::string metric_name;
  double epsilon = 0.0;
  Waveform waveform = Waveform::square;

  friend bool operator==(const AttackResult&, const AttackResult&) = default;
};

template <typename Output, typename Reference>
double evaluate_adapter(const ModelAdapter<Output, Reference>& adapter, std::span<const Grid<double>> images,
                        std::span<const Reference> refs) {
  return adapter.metric(adapter.predict(images), refs);
}

/// Score of the dataset under one perturbation.
template <typename Output, typename Reference>
double attack_score(const ModelAdapter<Output, Reference>& adapter, const AttackDataset<Reference>& data,
                    const WavePerturbation& p) {
  std::vector<Grid<double>> perturbed;
  perturbed.reserve(data.images.size());
  for (const auto& img : data.images) perturbed.push_back(apply_perturbation(img, make_wave(img.size(), p)));
  return evaluate_adapter<Output, Reference>(adapter, perturbed, data.references);
}

/// Evaluate every grid point; strongest = argmin, weakest = argmax, ties
/// going to the smallest λ, then θ, then φ.
template <typename Output, typename Reference>
AttackResult frequency_attack(const ModelAdapter<Output, Reference>& adapter, const AttackDataset<Reference>& data,
                              AttackGrid grid, double epsilon, Waveform waveform = Waveform::square) {
  if (data.images.empty()) throw ConfigError("frequency_attack needs a nonempty dataset");
  if (grid.size() == 0) throw ConfigError("frequency_attack needs a nonempty search grid");
  std::sort(grid.wavelengths.begin(), grid.wavelengths.end());
  std::sort(grid.thetas.begin(), grid.thetas.end());
  std::sort(grid.phase_fractions.begin(), grid.phase_fractions.end());

  AttackResult r;
  r.metric_name = adapter.metric_name;
  r.epsilon = epsilon;
  r.waveform = waveform;
  r.baseline_score = evaluate_adapter<Output, Reference>(adapter, data.images, data.references);
  for (double lambda : grid.wavelengths) {
    for (double theta : grid.thetas) {
      for (double frac : grid.phase_fractions) {
        const WavePerturbation p{lambda, theta, frac * lambda, epsilon, waveform};
        AttackPoint pt{lambda, theta, p.phase, 0.0};
        try {
          pt.score = attack_score(adapter, data, p);
        } catch (const std::exception& e) {
          throw AttackError("adapter failed at wavelength " + std::to_string(lambda) + ", theta " +
                            std::to_string(theta) + ", phase " + std::to_string(p.phase) + ": " + e.what());
        }
        if (r.grid.empty() || pt.score < r.strongest.score) r.strongest = pt;
        if (r.grid.empty() || pt.score > r.weakest.score) r.weakest = pt;
        r.grid.push_back(pt);
      }
    }
  }
  return r;
}

inline void to_json(nlohmann::json& j, const AttackPoint& p) {
  j = {{"wavelength", p.wavelength}, {"theta", p.theta}, {"phase", p.phase}, {"score", p.score}};
}

inline nlohmann::json attack_summary(const AttackResult& r) {
  return {{"metric", r.metric_name},      {"epsilon", r.epsilon},     {"waveform", to_string(r.waveform)},
          {"baseline_score", r.baseline_score}, {"strongest", r.strongest}, {"weakest", r.weakest},
          {"grid_points", r.grid.size()}};
}

inline void write_attack_csv(const std::filesystem::path& path, const AttackResult& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "wavelength,theta,phase,score\n";
  char row[128];
  for (const auto& p : r.grid) {
    std::snprintf(row, sizeof row, "%g,%g,%g,%.9g\n", p.wavelength, p.theta, p.phase, p.score);
    out << row;
  }
}

/// Score per (λ row, θ column), taking the lowest score over phases.
inline Grid<double> attack_score_map(const AttackResult& r, std::vector<double>* wavelengths = nullptr,
                                     std::vector<double>* thetas = nullptr) {
  std::vector<double> ls, ts;
  for (const auto& p : r.grid) {
    if (std::find(ls.begin(), ls.end(), p.wavelength) == ls.end()) ls.push_back(p.wavelength);
    if (std::find(ts.begin(), ts.end(), p.theta) == ts.end()) ts.push_back(p.theta);
  }
  std::sort(ls.begin(), ls.end());
  std::sort(ts.begin(), ts.end());
  Grid<double> g(Size{static_cast<int>(ls.size()), static_cast<int>(ts.size())}, INFINITY);
  for (const auto& p : r.grid) {
    const auto i = std::lower_bound(ls.begin(), ls.end(), p.wavelength) - ls.begin();
    const auto k = std::lower_bound(ts.begin(), ts.end(), p.theta) - ts.begin();
    g(static_cast<int>(i), static_cast<int>(k)) = std::min(g(static_cast<int>(i), static_cast<int>(k)), p.score);
  }
  if (wavelengths) *wavelengths = ls;
  if (thetas) *thetas = ts;
  return g;
}

inline void write_attack_heatmap(const std::filesystem::path& path, const AttackResult& r, int scale = 16) {
  plot::write_heatmap_png(path, attack_score_map(r), scale);
}

}  // namespace spacenet
