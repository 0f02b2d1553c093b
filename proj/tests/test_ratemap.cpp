#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>

#include "spacenet/network.hpp"
#include "spacenet/ratemap.hpp"

using namespace spacenet;

namespace {

// Returns a fixed map for every input.
struct ConstantStub {
  using scalar_type = double;
  Grid<double> map;
  Tensor<double> activation(const Tensor<double>& x, std::string_view layer) const {
    if (layer != "out") throw ConfigError("unknown layer '" + std::string(layer) + "'; available: out");
    Tensor<double> t(Shape4{x.n(), 1, map.height(), map.width()});
    for (int n = 0; n < x.n(); ++n) std::copy(map.begin(), map.end(), t.sample(n));
    return t;
  }
};

// Channel 0 is the foreground pixel count, channel 1 the input itself.
struct CountStub {
  using scalar_type = double;
  Tensor<double> activation(const Tensor<double>& x, std::string_view) const {
    Tensor<double> t(Shape4{x.n(), 2, x.h(), x.w()});
    for (int n = 0; n < x.n(); ++n) {
      const double count = std::accumulate(x.sample(n), x.sample(n) + x.sample_size(), 0.0);
      std::fill(t.channel(n, 0), t.channel(n, 0) + x.h() * x.w(), count);
      std::copy(x.sample(n), x.sample(n) + x.sample_size(), t.channel(n, 1));
    }
    return t;
  }
};

DatasetSplit counted_split(int images, Size s) {
  DatasetSplit split;
  for (int i = 0; i < images; ++i) {
    SkeletonSample smp{BinaryGrid(s, 0), "img" + std::to_string(i), s, 0, false};
    for (int k = 0; k < i; ++k) smp.pixels.values()[static_cast<std::size_t>(k)] = 1;
    split.samples.push_back(std::move(smp));
  }
  return split;
}

Model<float> small_tiny(Size s, std::uint64_t seed) {
  ModelConfig c;
  c.backbone = Backbone::tiny;
  c.input_size = s;
  c.num_classes_h = c.num_classes_v = 3;
  c.base_width = 2;
  c.hidden_width = 4;
  return Model<float>(c, seed);
}

}  // namespace

TEST(ExtractRatemaps, ConstantStubReturnsItsMap) {
  ConstantStub stub{Grid<double>(Size{3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12})};
  const auto maps = extract_ratemaps(stub, synthesize_skeletons(7, {8, 8}, 2), "out", 3);
  ASSERT_EQ(maps.size(), 1u);
  EXPECT_EQ(maps[0].values, stub.map);
  EXPECT_EQ(maps[0].n_images, 7);
  EXPECT_EQ(maps[0].layer, "out");
}

TEST(ExtractRatemaps, IndexStubAveragesToTwo) {
  const auto maps = extract_ratemaps(CountStub{}, counted_split(5, {4, 4}), "any", 2);
  for (double v : maps[0].values) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(ExtractRatemaps, SingleImageIsItsFeatureMap) {
  const auto model = small_tiny({16, 16}, 3);
  const auto split = synthesize_skeletons(1, {16, 16}, 5);
  const auto maps = extract_ratemaps(model, split, "last_hidden");
  const auto act = model.activation(stack_planes<float>(std::span<const BinaryGrid>(&split.samples[0].pixels, 1)), "last_hidden");
  ASSERT_EQ(maps.size(), static_cast<std::size_t>(act.c()));
  for (int c = 0; c < act.c(); ++c)
    for (std::size_t i = 0; i < maps[c].values.count(); ++i)
      ASSERT_EQ(maps[c].values.values()[i], static_cast<double>(act.channel(0, c)[i]));
}

TEST(ExtractRatemaps, UnionIsCountWeightedMean) {
  const auto model = small_tiny({16, 16}, 4);
  const auto a = synthesize_skeletons(5, {16, 16}, 6), b = synthesize_skeletons(9, {16, 16}, 7);
  DatasetSplit both = a;
  both.samples.insert(both.samples.end(), b.samples.begin(), b.samples.end());
  const auto ma = extract_ratemaps(model, a, "block3"), mb = extract_ratemaps(model, b, "block3"),
             mab = extract_ratemaps(model, both, "block3");
  double worst = 0.0;
  for (std::size_t c = 0; c < mab.size(); ++c)
    for (std::size_t i = 0; i < mab[c].values.count(); ++i) {
      const double mix = (5.0 * ma[c].values.values()[i] + 9.0 * mb[c].values.values()[i]) / 14.0;
      worst = std::max(worst, std::abs(mix - mab[c].values.values()[i]));
    }
  EXPECT_LE(worst, 1e-6);
}

TEST(ExtractRatemaps, PermutationAndBatchSizeInvariantExactly) {
  const auto model = small_tiny({16, 16}, 8);
  const auto split = augment_rotations(synthesize_skeletons(6, {16, 16}, 9));
  const auto base = extract_ratemaps(model, split, "last_hidden", 4);
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 3; ++trial) {
    DatasetSplit shuffled = split;
    std::shuffle(shuffled.samples.begin(), shuffled.samples.end(), gen);
    const auto m = extract_ratemaps(model, shuffled, "last_hidden", 4);
    for (std::size_t c = 0; c < base.size(); ++c) ASSERT_EQ(m[c].values, base[c].values);
  }
}

TEST(ExtractRatemaps, Errors) {
  const auto model = small_tiny({16, 16}, 0);
  EXPECT_THROW(extract_ratemaps(model, DatasetSplit{}, "last_hidden"), ConfigError);
  try {
    extract_ratemaps(model, synthesize_skeletons(2, {16, 16}, 1), "fc9");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("last_hidden"), std::string::npos);
  }
}

TEST(ProbeResponse, ZeroProbeOnBiasFreeStubIsZero) {
  SlitProbe zero;
  zero.pixels = BinaryGrid(Size{8, 8}, 0);
  const auto maps = probe_response(CountStub{}, zero, "x");
  ASSERT_EQ(maps.size(), 2u);
  for (const auto& m : maps)
    for (double v : m.values) EXPECT_EQ(v, 0.0);
}

TEST(ProbeResponse, SlitGivesOneFiniteMapPerChannel) {
  const auto model = small_tiny({32, 32}, 1);
  const auto maps = probe_response(model, make_slit_probe({32, 32}, SlitKind::single, 16), "last_hidden");
  ASSERT_EQ(maps.size(), 4u);
  for (const auto& m : maps) {
    EXPECT_EQ(m.values.size(), (Size{32, 32}));
    EXPECT_EQ(m.n_images, 1);
    for (double v : m.values) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Profile, MeanAndCenterLine) {
  const Ratemap m{Grid<double>(Size{2, 4}, {1, 2, 3, 4, 3, 4, 5, 6}), "x", 0, 1, Normalization::raw};
  EXPECT_EQ(profile_from_ratemap(m, Axis::horizontal, Reduction::mean).values, (std::vector<double>{2, 3, 4, 5}));
  EXPECT_EQ(profile_from_ratemap(m, Axis::vertical, Reduction::mean).values, (std::vector<double>{2.5, 4.5}));
  EXPECT_EQ(profile_from_ratemap(m, Axis::horizontal, Reduction::center_line).values, (std::vector<double>{3, 4, 5, 6}));
  EXPECT_EQ(profile_from_ratemap(m, Axis::vertical, Reduction::center_line).values, (std::vector<double>{3, 5}));

  const Ratemap flat{Grid<double>(Size{5, 7}, 1.5), "x", 0, 1, Normalization::raw};
  for (Axis a : {Axis::horizontal, Axis::vertical})
    for (Reduction r : {Reduction::mean, Reduction::center_line}) {
      const auto p = profile_from_ratemap(flat, a, r);
      EXPECT_EQ(p.values.size(), a == Axis::horizontal ? 7u : 5u);
      for (double v : p.values) EXPECT_EQ(v, 1.5);
    }
  EXPECT_THROW(parse_reduction("median"), ConfigError);
}

TEST(Ratemap, MinmaxAndUpsample) {
  const Ratemap m{Grid<double>(Size{2, 2}, {-1, 0, 1, 3}), "x", 2, 1, Normalization::raw};
  const auto n = minmax_normalize(m);
  EXPECT_EQ(n.normalization, Normalization::minmax);
  EXPECT_EQ(std::vector<double>(n.values.begin(), n.values.end()), (std::vector<double>{0, 0.25, 0.5, 1}));
  const auto flat = minmax_normalize(Ratemap{Grid<double>(Size{2, 2}, 4.0), "x", 0, 1, Normalization::raw});
  for (double v : flat.values) EXPECT_EQ(v, 0.0);
  const auto up = upsample_for_display(m, {4, 4});
  EXPECT_EQ(up(3, 3), 3.0);
  EXPECT_EQ(up(0, 1), -1.0);
}

TEST(Ratemap, NpyRoundTripAndHeader) {
  const auto dir = std::filesystem::temp_directory_path() / ("spacenet-npy-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::vector<Ratemap> maps;
  for (int c = 0; c < 3; ++c) {
    Ratemap r{Grid<double>(Size{5, 6}), "x", c, 1, Normalization::raw};
    for (std::size_t i = 0; i < r.values.count(); ++i) r.values.values()[i] = c * 100.0 + i / 7.0;
    maps.push_back(r);
  }
  write_npy(dir / "m.npy", maps);
  const auto back = read_npy(dir / "m.npy");
  ASSERT_EQ(back.size(), 3u);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(back[c], maps[c].values);
  // Data starts on a 64-byte boundary.
  EXPECT_EQ((std::filesystem::file_size(dir / "m.npy") - 3 * 30 * 8) % 64, 0u);

  const auto pngs = write_heatmaps(dir / "heat", "last_hidden", maps, 2);
  ASSERT_EQ(pngs.size(), 3u);
  EXPECT_EQ(pngs[2].filename(), "last_hidden_c2.png");
  for (const auto& p : pngs) EXPECT_TRUE(std::filesystem::exists(p));
  std::filesystem::remove_all(dir);
}

TEST(AggregateWaviness, AveragesBothAxesOfEveryChannel) {
  Ratemap wave{Grid<double>(Size{10, 200}), "x", 0, 1, Normalization::raw};
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 200; ++c) wave.values(r, c) = std::sin(2 * std::numbers::pi * 4 * (c + 0.5) / 200);
  Ratemap flat{Grid<double>(Size{10, 200}, 1.0), "x", 1, 1, Normalization::raw};
  const std::vector<Ratemap> maps{wave, flat};
  const auto agg = aggregate_waviness(maps);
  ASSERT_EQ(agg.reports.size(), 4u);
  EXPECT_NEAR(agg.reports[0].waviness, 0.995, 1e-12);
  EXPECT_EQ(agg.reports[1].waviness, 0.0);
  EXPECT_NEAR(agg.mean, 0.995 / 4, 1e-12);
  EXPECT_THROW(aggregate_waviness(std::span<const Ratemap>{}), ConfigError);
}
