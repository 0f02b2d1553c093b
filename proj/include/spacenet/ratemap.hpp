#pragma once

// Ratemaps: per-channel mean feature maps over a set of images at one layer.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "spacenet/dataio.hpp"
#include "spacenet/metrics.hpp"
#include "spacenet/plot.hpp"
#include "spacenet/spacemask.hpp"
#include "spacenet/tensor.hpp"

namespace spacenet {

/// Anything that yields a named layer's activations for an (N,1,H,W) batch.
/// Unknown layer names must throw with a list of available layers.
template <typename M>
concept ActivationModel = requires(const M& m, const Tensor<typename M::scalar_type>& x, std::string_view layer) {
  { m.activation(x, layer) } -> std::convertible_to<Tensor<typename M::scalar_type>>;
};

enum class Normalization { raw, minmax };
enum class Axis { horizontal, vertical };
enum class Reduction { mean, center_line };

inline const char* to_string(Normalization n) { return n == Normalization::raw ? "raw" : "minmax"; }
inline const char* to_string(Axis a) { return a == Axis::horizontal ? "horizontal" : "vertical"; }
inline const char* to_string(Reduction r) { return r == Reduction::mean ? "mean" : "center_line"; }
inline Reduction parse_reduction(std::string_view s) {
  if (s == "mean") return Reduction::mean;
  if (s == "center_line") return Reduction::center_line;
  throw ConfigError("unknown reduction '" + std::string(s) + "' (expected mean, center_line)");
}

struct Ratemap {
  Grid<double> values;
  std::string layer;
  int channel = 0;
  int n_images = 0;
  Normalization normalization = Normalization::raw;
};

namespace detail {

// Neumaier-compensated running sum, one accumulator per element.
struct CompensatedSum {
  std::vector<double> sum, comp;

  explicit CompensatedSum(std::size_t n = 0) : sum(n, 0.0), comp(n, 0.0) {}

  void add(std::size_t i, double x) {
    const double t = sum[i] + x;
    if (std::abs(sum[i]) >= std::abs(x))
      comp[i] += (sum[i] - t) + x;
    else
      comp[i] += (x - t) + sum[i];
    sum[i] = t;
  }
  double total(std::size_t i) const { return sum[i] + comp[i]; }
};

// Visiting order that depends only on sample content, so that the result
// does not depend on how the split happens to be ordered.
inline std::vector<std::size_t> canonical_order(const DatasetSplit& split) {
  std::vector<std::size_t> idx(split.samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = split.samples[a];
    const auto& y = split.samples[b];
    if (x.source_id != y.source_id) return x.source_id < y.source_id;
    if (x.rotation != y.rotation) return x.rotation < y.rotation;
    const auto xs = x.pixels.size(), ys = y.pixels.size();
    if (xs != ys) return std::tie(xs.height, xs.width) < std::tie(ys.height, ys.width);
    return std::lexicographical_compare(x.pixels.begin(), x.pixels.end(), y.pixels.begin(), y.pixels.end());
  });
  return idx;
}

template <typename T>
std::vector<Ratemap> split_channels(const Tensor<T>& act, int n, std::string_view layer, int n_images) {
  std::vector<Ratemap> out;
  for (int c = 0; c < act.c(); ++c) {
    Ratemap r{Grid<double>(Size{act.h(), act.w()}), std::string(layer), c, n_images, Normalization::raw};
    const T* src = act.channel(n, c);
    for (std::size_t i = 0; i < r.values.count(); ++i) r.values.values()[i] = static_cast<double>(src[i]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// One ratemap per channel of `layer`: the mean of that channel's feature map
/// over every image of the split, at the layer's native resolution.
template <ActivationModel M>
std::vector<Ratemap> extract_ratemaps(const M& model, const DatasetSplit& split, std::string_view layer,
                                      int batch_size = 16) {
  using T = typename M::scalar_type;
  if (split.samples.empty()) throw ConfigError("extract_ratemaps needs a nonempty split");
  batch_size = std::max(batch_size, 1);
  const auto order = detail::canonical_order(split);
  detail::CompensatedSum acc;
  Shape4 shape{};
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<BinaryGrid> planes;
    for (std::size_t k = start; k < end; ++k) planes.push_back(split.samples[order[k]].pixels);
    const Tensor<T> act = model.activation(stack_planes<T>(std::span<const BinaryGrid>(planes), T(1)), layer);
    if (start == 0) {
      shape = act.shape();
      acc = detail::CompensatedSum(static_cast<std::size_t>(shape.c) * shape.plane());
    } else if (act.c() != shape.c || act.h() != shape.h || act.w() != shape.w) {
      throw ShapeError("layer " + std::string(layer) + " changed shape between batches");
    }
    for (int n = 0; n < act.n(); ++n) {
      const T* src = act.sample(n);
      for (std::size_t i = 0; i < acc.sum.size(); ++i) acc.add(i, static_cast<double>(src[i]));
    }
  }
  const int n_images = static_cast<int>(split.samples.size());
  std::vector<Ratemap> out;
  const std::size_t P = shape.plane();
  for (int c = 0; c < shape.c; ++c) {
    Ratemap r{Grid<double>(Size{shape.h, shape.w}), std::string(layer), c, n_images, Normalization::raw};
    for (std::size_t i = 0; i < P; ++i)
      r.values.values()[i] = acc.total(static_cast<std::size_t>(c) * P + i) / static_cast<double>(n_images);
    out.push_back(std::move(r));
  }
  return out;
}

/// Per-channel activations of a single probe image (no averaging).
template <ActivationModel M>
std::vector<Ratemap> probe_response(const M& model, const SlitProbe& probe, std::string_view layer) {
  using T = typename M::scalar_type;
  const Tensor<T> act = model.activation(stack_planes<T>(std::span<const BinaryGrid>(&probe.pixels, 1), T(1)), layer);
  return detail::split_channels(act, 0, layer, 1);
}

/// Horizontal axis: one value per column (mean over rows, or the middle row
/// H/2). Vertical axis: one value per row (mean over columns, or column W/2).
inline Profile1D profile_from_ratemap(const Ratemap& map, Axis axis, Reduction reduction) {
  const auto& g = map.values;
  if (g.empty()) throw ShapeError("cannot take a profile of an empty ratemap");
  Profile1D p;
  p.origin = map.layer + "/c" + std::to_string(map.channel) + "/" + to_string(axis) + "/" + to_string(reduction);
  const int H = g.height(), W = g.width();
  if (axis == Axis::horizontal) {
    p.values.resize(static_cast<std::size_t>(W));
    for (int c = 0; c < W; ++c) {
      if (reduction == Reduction::center_line) {
        p.values[c] = g(H / 2, c);
      } else {
        double s = 0.0;
        for (int r = 0; r < H; ++r) s += g(r, c);
        p.values[c] = s / H;
      }
    }
  } else {
    p.values.resize(static_cast<std::size_t>(H));
    for (int r = 0; r < H; ++r) {
      if (reduction == Reduction::center_line) {
        p.values[r] = g(r, W / 2);
      } else {
        double s = 0.0;
        for (int c = 0; c < W; ++c) s += g(r, c);
        p.values[r] = s / W;
      }
    }
  }
  return p;
}

/// Rescale to [0, 1]; a constant map becomes all zeros.
inline Ratemap minmax_normalize(const Ratemap& map) {
  Ratemap out = map;
  out.normalization = Normalization::minmax;
  if (map.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double span = *hi - *lo;
  for (double& v : out.values) v = span > 0 ? (v - *lo) / span : 0.0;
  return out;
}

/// Nearest-neighbour upsampling for display.
inline Grid<double> upsample_for_display(const Ratemap& map, Size target) {
  return resize_nearest(map.values, target);
}

struct AggregateWaviness {
  double mean = 0.0;
  std::vector<WavinessReport> reports;  ///< per channel: horizontal then vertical
  std::vector<Profile1D> profiles;
};

/// Mean waviness over the horizontal and vertical profiles of every channel.
inline AggregateWaviness aggregate_waviness(std::span<const Ratemap> maps, double threshold = 0.1,
                                            Reduction reduction = Reduction::mean) {
  if (maps.empty()) throw ConfigError("aggregate_waviness needs at least one ratemap");
  AggregateWaviness agg;
  double total = 0.0;
  for (const auto& m : maps) {
    for (Axis axis : {Axis::horizontal, Axis::vertical}) {
      agg.profiles.push_back(profile_from_ratemap(m, axis, reduction));
      agg.reports.push_back(waviness(agg.profiles.back(), threshold));
      total += agg.reports.back().waviness;
    }
  }
  agg.mean = total / static_cast<double>(agg.reports.size());
  return agg;
}

// --- export ---------------------------------------------------------------------
// Ratemap stacks are stored as NumPy .npy version 1.0 files: the magic
// "\x93NUMPY", version bytes 1 0, a u16 little-endian header length, an ASCII
// dict header {'descr': '<f8', 'fortran_order': False, 'shape': (C, H, W), }
// padded with spaces to a 64-byte boundary and ending in '\n', then C·H·W
// little-endian float64 values in C order.

inline void write_npy(const std::filesystem::path& path, std::span<const Ratemap> maps) {
  if (maps.empty()) throw ConfigError("nothing to export");
  const Size s = maps.front().values.size();
  for (const auto& m : maps)
    if (m.values.size() != s) throw ShapeError("ratemaps in one .npy file must share a shape");
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(maps.size()) + ", " +
                       std::to_string(s.height) + ", " + std::to_string(s.width) + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& m : maps)
    out.write(reinterpret_cast<const char*>(m.values.data()), static_cast<std::streamsize>(m.values.count() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

/// Read a (C, H, W) float64 array written by write_npy.
inline std::vector<Grid<double>> read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char pre[10];
  in.read(pre, 10);
  if (!in || std::memcmp(pre, "\x93NUMPY\x01\x00", 8) != 0) throw IoError(path.string() + ": not a v1 .npy file");
  const std::size_t len = static_cast<unsigned char>(pre[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(pre[9])) << 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (header.find("'<f8'") == std::string::npos || header.find("False") == std::string::npos)
    throw IoError(path.string() + ": expected little-endian float64 in C order");
  const auto open = header.find("'shape': (");
  if (open == std::string::npos) throw IoError(path.string() + ": missing shape");
  int c = 0, h = 0, w = 0;
  if (std::sscanf(header.c_str() + open, "'shape': (%d, %d, %d)", &c, &h, &w) != 3)
    throw IoError(path.string() + ": expected a 3-D shape");
  std::vector<Grid<double>> out;
  for (int k = 0; k < c; ++k) {
    Grid<double> g(Size{h, w});
    in.read(reinterpret_cast<char*>(g.data()), static_cast<std::streamsize>(g.count() * sizeof(double)));
    out.push_back(std::move(g));
  }
  if (!in) throw IoError(path.string() + ": truncated data");
  return out;
}

/// One heatmap PNG per ratemap, named <prefix>_c<channel>.png.
inline std::vector<std::filesystem::path> write_heatmaps(const std::filesystem::path& dir, std::string_view prefix,
                                                         std::span<const Ratemap> maps, int scale = 4) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& m : maps) {
    paths.push_back(dir / (std::string(prefix) + "_c" + std::to_string(m.channel) + ".png"));
    plot::write_heatmap_png(paths.back(), m.values, scale);
  }
  return paths;
}

}  // namespace spacenet
