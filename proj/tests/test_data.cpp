#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "spacenet/dataio.hpp"
#include "spacenet/spacemask.hpp"

using namespace spacenet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("spacenet-test-" + std::to_string(::getpid()) + "-" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bmp8(const fs::path& p, const Grid<std::uint8_t>& img) {
  // Bottom-up 8-bit grayscale BMP with a 256-entry palette.
  const int w = img.width(), h = img.height(), stride = (w + 3) / 4 * 4;
  const std::uint32_t offset = 14 + 40 + 1024, size = offset + static_cast<std::uint32_t>(stride * h);
  std::vector<unsigned char> buf(size, 0);
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf[at + k] = static_cast<unsigned char>(v >> (8 * k));
  };
  buf[0] = 'B', buf[1] = 'M';
  put32(2, size);
  put32(10, offset);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(w));
  put32(22, static_cast<std::uint32_t>(h));
  buf[26] = 1;
  buf[28] = 8;
  put32(46, 256);
  for (int i = 0; i < 256; ++i) buf[54 + 4 * i] = buf[55 + 4 * i] = buf[56 + 4 * i] = static_cast<unsigned char>(i);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) buf[offset + (h - 1 - y) * stride + x] = img(y, x);
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

// --- grids ----------------------------------------------------------------------------

TEST(Grid, NearestResize448To224KeepsCornerPixel) {
  Grid<std::uint8_t> big(Size{448, 448}, 0);
  big(0, 0) = 1;
  const auto small = resize_nearest(big, {224, 224});
  EXPECT_EQ(small(0, 0), 1);
  EXPECT_EQ(count_nonzero(small), 1u);
}

TEST(Grid, NearestResizeSamplesFloorPositions) {
  Grid<int> g(Size{3, 5});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) g(r, c) = 10 * r + c;
  const auto out = resize_nearest(g, {2, 2});
  EXPECT_EQ(out(0, 0), 0);
  EXPECT_EQ(out(0, 1), 2);   // floor(1·5/2) = 2
  EXPECT_EQ(out(1, 0), 10);  // floor(1·3/2) = 1
  EXPECT_EQ(out(1, 1), 12);
}

TEST(Grid, RotationsInvertAndAreDistinctOnAsymmetricPattern) {
  const BinaryGrid g(Size{3, 3}, {1, 1, 0, 0, 1, 0, 0, 0, 0});
  std::set<std::vector<std::uint8_t>> distinct;
  for (int q = 0; q < 4; ++q) {
    const auto r = rotate90(g, q);
    distinct.insert({r.begin(), r.end()});
    EXPECT_EQ(rotate90(r, 4 - q), g);
  }
  EXPECT_EQ(distinct.size(), 4u);
  // Counter-clockwise: top-left corner moves to bottom-left.
  EXPECT_EQ(rotate90(g, 1)(2, 0), 1);
}

TEST(Grid, AtChecksBounds) {
  Grid<int> g(Size{2, 2});
  EXPECT_THROW(g.at(2, 0), ShapeError);
  EXPECT_THROW(Grid<int>(Size{2, 2}, std::vector<int>(3)), ShapeError);
}

// --- ingestion ------------------------------------------------------------------------

TEST(LoadDataset, ReadsPngAndBmpBinarisesAndResizes) {
  TempDir tmp;
  fs::create_directories(tmp.path / "train");
  Grid<std::uint8_t> a(Size{448, 448}, 0);
  a(0, 0) = 7;
  write_gray_png(tmp.path / "train" / "a.png", a);
  Grid<std::uint8_t> b(Size{16, 16}, 0);
  for (int c = 0; c < 16; ++c) b(5, c) = 255;
  write_bmp8(tmp.path / "train" / "b.bmp", b);
  std::ofstream(tmp.path / "train" / "notes.txt") << "ignored";

  const auto split = load_skeleton_dataset(tmp.path, SplitKind::train, {224, 224});
  ASSERT_EQ(split.size(), 2u);
  EXPECT_EQ(split.samples[0].source_id, "a.png");
  EXPECT_EQ(split.samples[0].original_size, (Size{448, 448}));
  EXPECT_EQ(split.samples[0].pixels(0, 0), 1);
  EXPECT_EQ(count_nonzero(split.samples[0].pixels), 1u);
  EXPECT_EQ(split.samples[1].source_id, "b.bmp");
  for (auto v : split.samples[1].pixels) EXPECT_LE(v, 1);
  EXPECT_EQ(split.samples[1].pixels(5 * 14, 100), 1);
}

TEST(LoadDataset, SkipsEmptyImagesAndFollowsManifest) {
  TempDir tmp;
  fs::create_directories(tmp.path / "test");
  write_gray_png(tmp.path / "test" / "empty.png", Grid<std::uint8_t>(Size{2, 2}, 0));
  Grid<std::uint8_t> one(Size{4, 4}, 0);
  one(1, 1) = 1;
  write_gray_png(tmp.path / "test" / "x.png", one);
  write_gray_png(tmp.path / "test" / "y.png", one);
  std::ofstream(tmp.path / "test" / kManifestName) << "y.png\nempty.png\nx.png\n";
  const auto split = load_skeleton_dataset(tmp.path, SplitKind::test, {4, 4});
  ASSERT_EQ(split.size(), 2u);
  EXPECT_EQ(split.samples[0].source_id, "y.png");
  EXPECT_EQ(split.samples[1].source_id, "x.png");
}

TEST(LoadDataset, MissingDirectoryNamesPath) {
  TempDir tmp;
  try {
    load_skeleton_dataset(tmp.path / "nowhere", SplitKind::train, {8, 8});
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos);
  }
}

TEST(LoadDataset, UnreadableImageNamesFile) {
  TempDir tmp;
  fs::create_directories(tmp.path / "train");
  std::ofstream(tmp.path / "train" / "bad.png") << "not a png";
  try {
    load_skeleton_dataset(tmp.path, SplitKind::train, {8, 8});
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
}

TEST(Manifest, RoundTrips) {
  TempDir tmp;
  const auto split = synthesize_skeletons(3, {8, 8}, 1);
  write_manifest(split, tmp.path / "m.txt");
  EXPECT_EQ(read_manifest(tmp.path / "m.txt"),
            (std::vector<std::string>{"synthetic-1-0", "synthetic-1-1", "synthetic-1-2"}));
}

// --- synthesis and augmentation -----------------------------------------------------------

TEST(Synthesize, DeterministicPerSeed) {
  EXPECT_EQ(synthesize_skeletons(10, {64, 64}, 7), synthesize_skeletons(10, {64, 64}, 7));
  EXPECT_NE(synthesize_skeletons(10, {64, 64}, 7), synthesize_skeletons(10, {64, 64}, 8));
}

TEST(Synthesize, TinyImageHasForeground) {
  const auto s = synthesize_skeletons(1, {8, 8}, 0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_GE(count_nonzero(s.samples[0].pixels), 1u);
}

TEST(Synthesize, ForegroundFractionWithinBounds) {
  const auto s = synthesize_skeletons(100, {64, 64}, 3);
  double mean = 0.0;
  for (const auto& x : s.samples) {
    for (auto v : x.pixels) ASSERT_LE(v, 1);
    mean += foreground_fraction(x);
  }
  mean /= 100.0;
  EXPECT_GE(mean, 0.005);
  EXPECT_LE(mean, 0.15);
}

TEST(Synthesize, TrainAndTestSeedsGiveDisjointSources) {
  EXPECT_TRUE(disjoint_sources(synthesize_skeletons(5, {16, 16}, 1), synthesize_skeletons(5, {16, 16}, 2)));
  EXPECT_FALSE(disjoint_sources(synthesize_skeletons(5, {16, 16}, 1), synthesize_skeletons(5, {16, 16}, 1)));
}

TEST(Augment, FourRotationsPreserveForeground) {
  const auto base = synthesize_skeletons(5, {32, 32}, 4);
  const auto aug = augment_rotations(base);
  ASSERT_EQ(aug.size(), 20u);
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (int q = 0; q < 4; ++q) {
      const auto& s = aug.samples[4 * i + q];
      EXPECT_EQ(s.rotation, 90 * q);
      EXPECT_EQ(s.source_id, base.samples[i].source_id);
      EXPECT_EQ(count_nonzero(s.pixels), count_nonzero(base.samples[i].pixels));
    }
    EXPECT_EQ(rotate90(aug.samples[4 * i + 1].pixels, 3), base.samples[i].pixels);
  }
}

TEST(Augment, NonSquareQuarterTurnsFlagSwappedDims) {
  DatasetSplit s;
  s.samples.push_back({BinaryGrid(Size{2, 3}, 1), "r", {2, 3}, 0, false});
  const auto aug = augment_rotations(s);
  EXPECT_FALSE(aug.samples[0].dims_swapped);
  EXPECT_TRUE(aug.samples[1].dims_swapped);
  EXPECT_EQ(aug.samples[1].pixels.size(), (Size{3, 2}));
  EXPECT_FALSE(aug.samples[2].dims_swapped);
  EXPECT_TRUE(aug.samples[3].dims_swapped);
}

// --- space masks --------------------------------------------------------------------------

TEST(SpaceMask, N20Width224BandsAscending) {
  const auto m = build_space_mask({224, 224}, 20, MaskScheme::xy, Direction::horizontal);
  EXPECT_EQ(m.max_class, 20);
  std::vector<int> widths(21, 0);
  for (int r = 0; r < 224; ++r)
    for (int c = 0; c < 224; ++c) {
      ASSERT_EQ(m.labels(r, c), m.labels(0, c));
      if (c > 0) {
        ASSERT_GE(m.labels(r, c), m.labels(r, c - 1));
      }
    }
  for (int c = 0; c < 224; ++c) ++widths[m.labels(0, c)];
  EXPECT_EQ(widths[0], 0);
  for (int k = 1; k <= 20; ++k) {
    EXPECT_TRUE(widths[k] == 11 || widths[k] == 12) << "class " << k << " width " << widths[k];
    // Boundaries at floor(r·224/20).
    EXPECT_EQ(m.labels(0, (k - 1) * 224 / 20), k);
  }
}

TEST(SpaceMask, SmallExamples) {
  const auto xy = build_space_mask({4, 4}, 2, MaskScheme::xy, Direction::horizontal);
  EXPECT_EQ(std::vector<int>(xy.labels.begin(), xy.labels.begin() + 4), (std::vector<int>{1, 1, 2, 2}));
  const auto sym = build_space_mask({8, 8}, 4, MaskScheme::xy_symmetric, Direction::horizontal);
  EXPECT_EQ(std::vector<int>(sym.labels.begin(), sym.labels.begin() + 8), (std::vector<int>{2, 2, 1, 1, 1, 1, 2, 2}));
  EXPECT_EQ(sym.max_class, 2);
  const auto v = build_space_mask({4, 4}, 2, MaskScheme::xy, Direction::vertical);
  EXPECT_EQ(v.labels(0, 3), 1);
  EXPECT_EQ(v.labels(3, 0), 2);
}

TEST(SpaceMask, SymmetricN20IsMirrorSymmetric) {
  const auto m = build_space_mask({224, 224}, 20, MaskScheme::xy_symmetric, Direction::horizontal);
  EXPECT_EQ(m.max_class, 10);
  std::set<int> seen;
  for (int r = 0; r < 224; ++r)
    for (int c = 0; c < 224; ++c) {
      ASSERT_EQ(m.labels(r, c), m.labels(r, 223 - c));
      ASSERT_GE(m.labels(r, c), 1);
      ASSERT_LE(m.labels(r, c), 10);
      seen.insert(m.labels(r, c));
    }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(m.labels(0, 0), 10);
  EXPECT_EQ(m.labels(0, 111), 1);
}

TEST(SpaceMask, RejectsBadParameters) {
  EXPECT_THROW(build_space_mask({8, 8}, 1, MaskScheme::xy, Direction::horizontal), ConfigError);
  EXPECT_THROW(build_space_mask({8, 8}, 3, MaskScheme::xy_symmetric, Direction::horizontal), ConfigError);
  EXPECT_THROW(build_space_mask({8, 8}, 9, MaskScheme::xy, Direction::horizontal), ConfigError);
  EXPECT_THROW(parse_mask_scheme("diagonal"), ConfigError);
}

TEST(ProxyLabel, ExamplesAndForegroundCount) {
  const auto masks = build_mask_pair({224, 224}, 20, MaskScheme::xy);
  BinaryGrid sk(Size{224, 224}, 0);
  sk(0, 223) = 1;
  const auto lab = make_proxy_label(sk, masks.horizontal, masks.vertical);
  EXPECT_EQ(count_nonzero(lab.horizontal), 1u);
  EXPECT_EQ(lab.horizontal(0, 223), 20);
  EXPECT_EQ(lab.vertical(0, 223), 1);

  const BinaryGrid zeros(Size{224, 224}, 0), ones(Size{224, 224}, 1);
  EXPECT_EQ(count_nonzero(make_proxy_label(zeros, masks.horizontal, masks.vertical).horizontal), 0u);
  EXPECT_EQ(make_proxy_label(ones, masks.horizontal, masks.vertical).horizontal, masks.horizontal.labels);
}

TEST(ProxyLabel, NonzeroCountEqualsSkeletonForeground) {
  for (MaskScheme scheme : {MaskScheme::xy, MaskScheme::xy_symmetric}) {
    const auto masks = build_mask_pair({64, 64}, 4, scheme);
    for (const auto& s : synthesize_skeletons(20, {64, 64}, 5).samples) {
      const auto lab = make_proxy_label(s, masks);
      ASSERT_EQ(count_nonzero(lab.horizontal), count_nonzero(s.pixels));
      ASSERT_EQ(count_nonzero(lab.vertical), count_nonzero(s.pixels));
    }
  }
}

TEST(ProxyLabel, RejectsMismatchedSizes) {
  const auto masks = build_mask_pair({8, 8}, 2, MaskScheme::xy);
  EXPECT_THROW(make_proxy_label(BinaryGrid(Size{4, 4}), masks.horizontal, masks.vertical), ShapeError);
  EXPECT_THROW(make_proxy_label(BinaryGrid(Size{8, 8}), masks.vertical, masks.horizontal), ConfigError);
}

TEST(SlitProbe, SingleAndDoubleGeometry) {
  const auto single = make_slit_probe({64, 64}, SlitKind::single, 16);
  EXPECT_EQ(count_nonzero(single.pixels), 16u);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (single.pixels(r, c)) {
        ASSERT_EQ(c, 32);
      }
  EXPECT_EQ(single.pixels(24, 32), 1);
  EXPECT_EQ(single.pixels(39, 32), 1);

  const auto dbl = make_slit_probe({64, 64}, SlitKind::double_slit, 16, 8);
  EXPECT_EQ(count_nonzero(dbl.pixels), 32u);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (dbl.pixels(r, c)) {
        ASSERT_TRUE(c == 28 || c == 36);
      }

  const auto horiz = make_slit_probe({64, 64}, SlitKind::single, 16, 0, SlitAxis::horizontal);
  for (int c = 24; c < 40; ++c) EXPECT_EQ(horiz.pixels(32, c), 1);
}

TEST(SlitProbe, RejectsOutOfBounds) {
  EXPECT_THROW(make_slit_probe({8, 8}, SlitKind::single, 100), ConfigError);
  EXPECT_THROW(make_slit_probe({8, 8}, SlitKind::double_slit, 4, 1), ConfigError);
  EXPECT_THROW(make_slit_probe({8, 8}, SlitKind::double_slit, 4, 20), ConfigError);
}

TEST(ClassMapPng, PaletteIndicesRoundTrip) {
  TempDir tmp;
  const auto m = build_space_mask({16, 24}, 6, MaskScheme::xy, Direction::horizontal);
  export_class_map_png(tmp.path / "mask.png", m.labels, m.max_class);
  const auto back = read_png_indices(tmp.path / "mask.png");
  ASSERT_EQ(back.size(), m.labels.size());
  for (std::size_t i = 0; i < back.count(); ++i) ASSERT_EQ(back.values()[i], m.labels.values()[i]);
}
