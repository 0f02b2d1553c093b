#pragma once

// Skeleton corpora: loading ground-truth label images, synthesizing
// desk-scale corpora, and four-way rotation augmentation.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "spacenet/grid.hpp"
#include "spacenet/image_io.hpp"
#include "spacenet/rng.hpp"

namespace spacenet {

class IngestError : public Error {
 public:
  using Error::Error;
};

enum class SplitKind { train, test };

inline const char* to_string(SplitKind s) { return s == SplitKind::train ? "train" : "test"; }

struct SkeletonSample {
  BinaryGrid pixels;  ///< values in {0,1}
  std::string source_id;
  Size original_size;
  int rotation = 0;  ///< degrees counter-clockwise, one of 0/90/180/270
  bool dims_swapped = false;  ///< set when a quarter turn swapped a non-square grid

  friend bool operator==(const SkeletonSample&, const SkeletonSample&) = default;
};

struct DatasetSplit {
  std::vector<SkeletonSample> samples;
  SplitKind split = SplitKind::train;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Convert an 8-bit label image to {0,1}: any nonzero value is skeleton.
inline BinaryGrid binarize(const Grid<std::uint8_t>& img) {
  BinaryGrid out(img.size());
  std::transform(img.begin(), img.end(), out.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v > 0 ? 1 : 0); });
  return out;
}

inline double foreground_fraction(const SkeletonSample& s) {
  return s.pixels.empty() ? 0.0
                          : static_cast<double>(count_nonzero(s.pixels)) /
                                static_cast<double>(s.pixels.count());
}

inline bool disjoint_sources(const DatasetSplit& a, const DatasetSplit& b) {
  std::set<std::string> ids;
  for (const auto& s : a.samples) ids.insert(s.source_id);
  return std::none_of(b.samples.begin(), b.samples.end(),
                      [&](const SkeletonSample& s) { return ids.contains(s.source_id); });
}

// --- manifests ---------------------------------------------------------------

/// One source_id per line, in split order.
inline void write_manifest(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write manifest " + path.string());
  for (const auto& s : split.samples) out << s.source_id << '\n';
}

inline std::vector<std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read manifest " + path.string());
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') ids.push_back(line);
  }
  return ids;
}

// --- loading -------------------------------------------------------------------

/// Name of the optional manifest file inside a split directory.
inline constexpr const char* kManifestName = "manifest.txt";

/// Load `<root>/<train|test>/` as a split. Files are taken in the order of
/// `manifest.txt` when present, otherwise sorted by file name. Samples whose
/// foreground vanishes after resizing are skipped with a warning.
inline DatasetSplit load_skeleton_dataset(const std::filesystem::path& root, SplitKind split,
                                          Size target_size, std::uint64_t seed = 0) {
  namespace fs = std::filesystem;
  if (!target_size.positive())
    throw IngestError("target size must be positive, got " + to_string(target_size));
  const fs::path dir = root / to_string(split);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IngestError("dataset directory not found: " + dir.string());

  std::vector<std::string> names;
  if (fs::exists(dir / kManifestName)) {
    names = read_manifest(dir / kManifestName);
  } else {
    fs::directory_iterator it(dir, ec);
    if (ec) throw IngestError("cannot read dataset directory " + dir.string() + ": " + ec.message());
    for (const auto& entry : it)
      if (entry.is_regular_file() && is_supported_image(entry.path()))
        names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
  }

  DatasetSplit out;
  out.split = split;
  out.seed = seed;
  out.samples.reserve(names.size());
  for (const auto& name : names) {
    const fs::path file = dir / name;
    Grid<std::uint8_t> raw;
    try {
      raw = read_gray_image(file);
    } catch (const IoError& e) {
      throw IngestError(std::string("cannot ingest ") + file.string() + ": " + e.what());
    }
    SkeletonSample s;
    s.original_size = raw.size();
    s.pixels = resize_nearest(binarize(raw), target_size);
    s.source_id = name;
    if (count_nonzero(s.pixels) == 0) {
      spdlog::warn("skipping {}: no foreground after resize to {}", file.string(),
                   to_string(target_size));
      continue;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

// --- synthesis -----------------------------------------------------------------

namespace detail {

// 8-connected Bresenham line.
inline void draw_line(BinaryGrid& g, int r0, int c0, int r1, int c1) {
  const int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
  const int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
  int err = dc - dr;
  for (;;) {
    if (r0 >= 0 && c0 >= 0 && r0 < g.height() && c0 < g.width()) g(r0, c0) = 1;
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 > -dr) {
      err -= dr;
      c0 += sc;
    }
    if (e2 < dc) {
      err += dc;
      r0 += sr;
    }
  }
}

// Trace one open curve of the given arc length. Straight pieces (with
// occasional turns) give polylines; a constant turning rate gives an arc.
// The path reflects off the image border so it stays inside.
inline void trace_curve(BinaryGrid& g, Rng& rng, double length) {
  const double hmax = g.height() - 1, wmax = g.width() - 1;
  double y = rng.uniform(0.0, hmax), x = rng.uniform(0.0, wmax);
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const bool arc = rng.uniform() < 0.4;
  double turn_rate = 0.0;
  std::vector<double> turn_at;
  if (arc) {
    const double sweep = rng.uniform(std::numbers::pi / 3.0, 5.0 * std::numbers::pi / 3.0);
    turn_rate = (rng.uniform() < 0.5 ? -1.0 : 1.0) * sweep / std::max(length, 1.0);
  } else {
    const int turns = rng.integer(0, 2);
    for (int i = 0; i < turns; ++i) turn_at.push_back(rng.uniform(0.2, 0.8) * length);
    std::sort(turn_at.begin(), turn_at.end());
  }

  auto reflect = [](double& p, double& d, double hi) {
    if (hi <= 0) {
      p = 0;
      return;
    }
    while (p < 0 || p > hi) {
      if (p < 0) p = -p;
      if (p > hi) p = 2 * hi - p;
      d = -d;
    }
  };

  int pr = static_cast<int>(std::lround(y)), pc = static_cast<int>(std::lround(x));
  g(pr, pc) = 1;
  std::size_t next_turn = 0;
  const int steps = std::max(1, static_cast<int>(std::lround(length)));
  for (int i = 1; i <= steps; ++i) {
    if (next_turn < turn_at.size() && i >= turn_at[next_turn]) {
      const double delta = rng.uniform(std::numbers::pi / 6.0, 2.0 * std::numbers::pi / 3.0);
      heading += rng.uniform() < 0.5 ? delta : -delta;
      ++next_turn;
    }
    heading += turn_rate;
    double dy = std::sin(heading), dx = std::cos(heading);
    y += dy;
    x += dx;
    reflect(y, dy, hmax);
    reflect(x, dx, wmax);
    heading = std::atan2(dy, dx);
    const int r = static_cast<int>(std::lround(y)), c = static_cast<int>(std::lround(x));
    draw_line(g, pr, pc, r, c);
    pr = r;
    pc = c;
  }
}

}  // namespace detail

/// Deterministic corpus of `count` binary images, each with 1–4 open
/// polylines or arcs whose lengths are 20–80% of the image diagonal.
inline DatasetSplit synthesize_skeletons(int count, Size size, std::uint64_t seed,
                                         SplitKind split = SplitKind::train) {
  if (count <= 0) throw ConfigError("synthesize_skeletons: count must be positive");
  if (!size.positive()) throw ConfigError("synthesize_skeletons: size must be positive");
  const double diagonal = std::hypot(static_cast<double>(size.height), static_cast<double>(size.width));
  DatasetSplit out;
  out.split = split;
  out.seed = seed;
  out.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    // Independent stream per sample so a corpus prefix is stable under count changes.
    Rng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i) * 0xBF58476D1CE4E5B9ull + 1);
    SkeletonSample s;
    s.pixels = BinaryGrid(size, 0);
    const int curves = rng.integer(1, 4);
    for (int k = 0; k < curves; ++k)
      detail::trace_curve(s.pixels, rng, rng.uniform(0.2, 0.8) * diagonal);
    s.source_id = "synthetic-" + std::to_string(seed) + "-" + std::to_string(i);
    s.original_size = size;
    out.samples.push_back(std::move(s));
  }
  return out;
}

/// Each sample at 0°, 90°, 180° and 270°, sample-major order.
inline DatasetSplit augment_rotations(const DatasetSplit& split) {
  if (split.empty()) throw ConfigError("augment_rotations: split is empty");
  DatasetSplit out;
  out.split = split.split;
  out.seed = split.seed;
  out.samples.reserve(split.size() * 4);
  for (const auto& s : split.samples) {
    for (int q = 0; q < 4; ++q) {
      SkeletonSample r = s;
      r.pixels = rotate90(s.pixels, q);
      r.rotation = (s.rotation + 90 * q) % 360;
      r.dims_swapped = s.dims_swapped != (q % 2 == 1 && s.pixels.height() != s.pixels.width());
      out.samples.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace spacenet
