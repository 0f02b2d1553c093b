#pragma once

// Position-class masks, proxy labels and slit probe inputs.
//
// A mask splits one image axis into N contiguous bands. Band r covers indices
// [floor(r·W/N), floor((r+1)·W/N)), so band widths differ by at most one.
// The xy scheme numbers bands 1..N along the axis; xy_symmetric numbers them
// from the centre outwards, 1..N/2, and is an exact mirror image about the
// axis midline.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spacenet/dataio.hpp"
#include "spacenet/grid.hpp"
#include "spacenet/image_io.hpp"

namespace spacenet {

enum class MaskScheme { xy, xy_symmetric };
/// horizontal: classes vary along columns (index i = 0); vertical: along rows (i = 1).
enum class Direction { horizontal, vertical };

inline const char* to_string(MaskScheme s) { return s == MaskScheme::xy ? "xy" : "xy_symmetric"; }
inline MaskScheme parse_mask_scheme(std::string_view s) {
  if (s == "xy") return MaskScheme::xy;
  if (s == "xy_symmetric") return MaskScheme::xy_symmetric;
  throw ConfigError("unknown mask scheme '" + std::string(s) + "' (expected xy, xy_symmetric)");
}
inline const char* to_string(Direction d) {
  return d == Direction::horizontal ? "horizontal" : "vertical";
}

struct SpaceMask {
  ClassMap labels;
  Direction direction = Direction::horizontal;
  MaskScheme scheme = MaskScheme::xy;
  int regions = 0;
  int max_class = 0;
};

inline int max_class_for(MaskScheme scheme, int regions) {
  return scheme == MaskScheme::xy ? regions : regions / 2;
}

/// Band index claiming position `j` on an axis of extent `extent` cut into `regions` bands.
inline int band_of(int j, int extent, int regions) {
  // Largest r with floor(r·W/N) <= j.
  int r = static_cast<int>((static_cast<long long>(j) * regions + regions - 1) / extent);
  while (r > 0 && static_cast<long long>(r) * extent / regions > j) --r;
  while (r + 1 < regions && static_cast<long long>(r + 1) * extent / regions <= j) ++r;
  return r;
}

/// Class assigned to band r under a scheme.
inline int band_class(int r, int regions, MaskScheme scheme) {
  if (scheme == MaskScheme::xy) return r + 1;
  const int half = regions / 2;
  return r < half ? half - r : r - half + 1;
}

inline SpaceMask build_space_mask(Size size, int regions, MaskScheme scheme, Direction direction) {
  if (!size.positive()) throw ConfigError("space mask size must be positive");
  const int extent = direction == Direction::horizontal ? size.width : size.height;
  if (regions < 2) throw ConfigError("space mask needs N >= 2, got " + std::to_string(regions));
  if (scheme == MaskScheme::xy_symmetric && regions % 2 != 0)
    throw ConfigError("xy_symmetric mask needs an even N, got " + std::to_string(regions));
  if (regions > extent)
    throw ConfigError("space mask N=" + std::to_string(regions) + " exceeds extent " +
                      std::to_string(extent));

  // Floor boundaries are not mirror-symmetric when N does not divide W, so
  // the symmetric scheme partitions the left half and reflects it.
  std::vector<int> line(static_cast<std::size_t>(extent));
  for (int j = 0; j < extent; ++j) {
    const int pos = scheme == MaskScheme::xy ? j : std::min(j, extent - 1 - j);
    line[j] = band_class(band_of(pos, extent, regions), regions, scheme);
  }

  SpaceMask m;
  m.labels = ClassMap(size);
  for (int r = 0; r < size.height; ++r)
    for (int c = 0; c < size.width; ++c)
      m.labels(r, c) = direction == Direction::horizontal ? line[c] : line[r];
  m.direction = direction;
  m.scheme = scheme;
  m.regions = regions;
  m.max_class = max_class_for(scheme, regions);
  return m;
}

struct MaskPair {
  SpaceMask horizontal;
  SpaceMask vertical;

  int num_classes_h() const { return horizontal.max_class + 1; }
  int num_classes_v() const { return vertical.max_class + 1; }
};

inline MaskPair build_mask_pair(Size size, int regions, MaskScheme scheme) {
  return {build_space_mask(size, regions, scheme, Direction::horizontal),
          build_space_mask(size, regions, scheme, Direction::vertical)};
}

/// Per-pixel class maps; 0 is background.
struct ProxyLabel {
  ClassMap horizontal;
  ClassMap vertical;
  static constexpr int background_class = 0;

  Size size() const { return horizontal.size(); }
};

inline ProxyLabel make_proxy_label(const BinaryGrid& skeleton, const SpaceMask& mask_h,
                                   const SpaceMask& mask_v) {
  if (mask_h.direction != Direction::horizontal || mask_v.direction != Direction::vertical)
    throw ConfigError("make_proxy_label expects (horizontal, vertical) masks");
  if (skeleton.size() != mask_h.labels.size() || skeleton.size() != mask_v.labels.size())
    throw ShapeError("skeleton " + to_string(skeleton.size()) + " and masks " +
                     to_string(mask_h.labels.size()) + "/" + to_string(mask_v.labels.size()) +
                     " differ in size");
  ProxyLabel out{ClassMap(skeleton.size()), ClassMap(skeleton.size())};
  for (std::size_t i = 0; i < skeleton.count(); ++i) {
    const int x = skeleton.values()[i];
    out.horizontal.values()[i] = x * mask_h.labels.values()[i];
    out.vertical.values()[i] = x * mask_v.labels.values()[i];
  }
  return out;
}

inline ProxyLabel make_proxy_label(const SkeletonSample& sample, const MaskPair& masks) {
  return make_proxy_label(sample.pixels, masks.horizontal, masks.vertical);
}

// --- slit probes -----------------------------------------------------------------

enum class SlitKind { single, double_slit };
enum class SlitAxis { vertical, horizontal };

struct SlitProbe {
  BinaryGrid pixels;
  SlitKind kind = SlitKind::single;
  int slit_length = 0;
  SlitAxis slit_axis = SlitAxis::vertical;
  int separation = 0;  ///< double slits only
  int center_row = 0;
  int center_col = 0;
};

/// Centred one-pixel-wide slit(s). A vertical single slit occupies column W/2
/// and rows [H/2 - L/2, H/2 - L/2 + L). Double slits sit at W/2 ± separation/2.
inline SlitProbe make_slit_probe(Size size, SlitKind kind, int slit_length, int separation = 0,
                                 SlitAxis axis = SlitAxis::vertical) {
  if (!size.positive()) throw ConfigError("probe size must be positive");
  if (slit_length <= 0) throw ConfigError("slit length must be positive");
  if (kind == SlitKind::double_slit && separation < 2)
    throw ConfigError("double slit needs separation >= 2, got " + std::to_string(separation));

  const bool vertical = axis == SlitAxis::vertical;
  const int along = vertical ? size.height : size.width;   // extent along the slit
  const int across = vertical ? size.width : size.height;  // extent across the slits
  if (slit_length > along)
    throw ConfigError("slit length " + std::to_string(slit_length) + " exceeds grid extent " +
                      std::to_string(along));
  const int center_across = across / 2;
  std::vector<int> positions;
  if (kind == SlitKind::single) {
    positions.push_back(center_across);
  } else {
    positions.push_back(center_across - separation / 2);
    positions.push_back(center_across - separation / 2 + separation);
  }
  for (int p : positions)
    if (p < 0 || p >= across)
      throw ConfigError("slit at offset " + std::to_string(p) + " falls outside the grid");

  SlitProbe probe;
  probe.pixels = BinaryGrid(size, 0);
  probe.kind = kind;
  probe.slit_length = slit_length;
  probe.slit_axis = axis;
  probe.separation = kind == SlitKind::double_slit ? separation : 0;
  probe.center_row = size.height / 2;
  probe.center_col = size.width / 2;
  const int start = along / 2 - slit_length / 2;
  for (int p : positions) {
    for (int t = start; t < start + slit_length; ++t) {
      if (vertical)
        probe.pixels(t, p) = 1;
      else
        probe.pixels(p, t) = 1;
    }
  }
  return probe;
}

// --- export ------------------------------------------------------------------------

/// Palette with black background (index 0) and evenly spaced hues for classes.
inline std::vector<Rgb> class_palette(int max_class) {
  std::vector<Rgb> pal;
  pal.push_back({0, 0, 0});
  for (int k = 1; k <= max_class; ++k) {
    const double h = 6.0 * (k - 1) / std::max(1, max_class);
    const int i = static_cast<int>(h) % 6;
    const double f = h - static_cast<int>(h);
    const auto up = static_cast<std::uint8_t>(255 * f), down = static_cast<std::uint8_t>(255 * (1 - f));
    switch (i) {
      case 0: pal.push_back({255, up, 0}); break;
      case 1: pal.push_back({down, 255, 0}); break;
      case 2: pal.push_back({0, 255, up}); break;
      case 3: pal.push_back({0, down, 255}); break;
      case 4: pal.push_back({up, 0, 255}); break;
      default: pal.push_back({255, 0, down}); break;
    }
  }
  return pal;
}

/// Indexed-colour PNG whose palette index equals the class value.
inline void export_class_map_png(const std::filesystem::path& path, const ClassMap& map, int max_class) {
  if (max_class > 255) throw IoError("class maps above 255 classes cannot be palette-encoded");
  Grid<std::uint8_t> idx(map.size());
  for (std::size_t i = 0; i < map.count(); ++i) {
    const int v = map.values()[i];
    if (v < 0 || v > max_class) throw IoError("class " + std::to_string(v) + " outside palette");
    idx.values()[i] = static_cast<std::uint8_t>(v);
  }
  write_indexed_png(path, idx, class_palette(max_class));
}

}  // namespace spacenet
