#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <queue>

#include "spacenet/experiment.hpp"

using namespace spacenet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("spacenet-exp-" + std::to_string(::getpid()) + "-" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.data.size = {16, 16};
  c.data.train_count = 8;
  c.data.test_count = 4;
  c.model.base_width = 2;
  c.model.hidden_width = 4;
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.seed = 5;
  return c;
}

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// 4-connected components of one colour.
int count_blobs(const RgbImage& img, Rgb colour) {
  Grid<std::uint8_t> seen(img.size(), 0);
  int blobs = 0;
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      if (seen(r, c) || !(img(r, c) == colour)) continue;
      ++blobs;
      std::queue<std::pair<int, int>> q;
      q.push({r, c});
      seen(r, c) = 1;
      while (!q.empty()) {
        const auto [y, x] = q.front();
        q.pop();
        for (auto [dy, dx] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || nx < 0 || ny >= img.height() || nx >= img.width()) continue;
          if (seen(ny, nx) || !(img(ny, nx) == colour)) continue;
          seen(ny, nx) = 1;
          q.push({ny, nx});
        }
      }
    }
  return blobs;
}

ExperimentRecord fake_record(const fs::path& dir, const std::string& id) {
  fs::create_directories(dir);
  std::vector<Ratemap> maps;
  for (int c = 0; c < 2; ++c) {
    Ratemap m{Grid<double>(Size{8, 64}), "last_hidden", c, 3, Normalization::raw};
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 64; ++x) m.values(y, x) = std::sin(2 * std::numbers::pi * (c + 1) * (x + 0.5) / 64);
    maps.push_back(m);
  }
  write_npy(dir / "ratemaps.npy", maps);
  std::ofstream(dir / "attack.csv") << "wavelength,theta,phase,score\n4,0,0,0.9\n4,90,0,0.8\n8,0,0,0.7\n8,90,0,0.95\n";
  ExperimentRecord r;
  r.run_id = id;
  r.config = to_json_doc(ExperimentConfig{});
  r.acc_space = 0.97;
  r.waviness = 0.41;
  r.wave_pattern = true;
  r.artifacts = {{"ratemaps", (dir / "ratemaps.npy").string()}, {"attack_csv", (dir / "attack.csv").string()}};
  return r;
}

}  // namespace

// --- config ------------------------------------------------------------------------

TEST(Config, RoundTripIsIdentity) {
  for (const ExperimentConfig& c : {ExperimentConfig{}, full_profile(), quick_config()}) {
    const auto text = emit_config(c);
    const auto back = parse_config(nlohmann::json::parse(text));
    EXPECT_EQ(back, c);
    EXPECT_EQ(emit_config(back), text);
  }
}

TEST(Config, DeskDefaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.data.size, (Size{64, 64}));
  EXPECT_EQ(c.data.regions, 4);
  EXPECT_EQ(c.model.backbone, Backbone::tiny);
  EXPECT_EQ(c.train.epochs, 30);
  EXPECT_EQ(c.train.lr, 0.1);
  EXPECT_EQ(c.analysis.wave_pattern_threshold, 0.3);
  EXPECT_EQ(c.attack.epsilon, 8.0);
  const auto m = model_config(c);
  EXPECT_EQ(m.num_classes_h, 5);
  const auto p = model_config(full_profile());
  EXPECT_EQ(p.num_classes_h, 21);
  EXPECT_EQ(p.backbone, Backbone::vgg16_like);
  EXPECT_EQ(full_profile().train.epochs, 80);
}

TEST(Config, UnknownKeyAndKindErrorsNameTheKey) {
  EXPECT_NE(error_of([] { parse_config({{"train", {{"lrr", 0.1}}}}); }).find("unknown config key 'train.lrr'"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config({{"train", {{"lr", "fast"}}}}); }).find("'train.lr' expects number"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config({{"model", {{"backbone", "alexnet"}}}}); }).find("model.backbone"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config({{"data", {{"size", {64}}}}}); }).find("data.size"), std::string::npos);
  EXPECT_NE(error_of([] { parse_config({{"train", {{"epochs", 1.5}}}}); }).find("train.epochs"), std::string::npos);
}

TEST(Config, LoadFileNamesLocation) {
  TempDir tmp;
  std::ofstream(tmp.path / "bad.json") << R"({"analysis": {"layr": "x"}})";
  const auto msg = error_of([&] { load_config(tmp.path / "bad.json"); });
  EXPECT_NE(msg.find("bad.json"), std::string::npos);
  EXPECT_NE(msg.find("analysis.layr"), std::string::npos);
  std::ofstream(tmp.path / "broken.json") << "{";
  EXPECT_THROW(load_config(tmp.path / "broken.json"), ConfigError);
  std::ofstream(tmp.path / "ok.json") << R"({"seed": 9, "data": {"scheme": "xy_symmetric"}})";
  const auto c = load_config(tmp.path / "ok.json");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.data.scheme, MaskScheme::xy_symmetric);
  EXPECT_EQ(c.train, ExperimentConfig{}.train);
}

TEST(Config, Overrides) {
  ExperimentConfig c;
  c = apply_override(c, "train.lr", "0.05");
  c = apply_override(c, "model.backbone", "vgg16_like");
  c = apply_override(c, "data.size", "[32,48]");
  EXPECT_EQ(c.train.lr, 0.05);
  EXPECT_EQ(c.model.backbone, Backbone::vgg16_like);
  EXPECT_EQ(c.data.size, (Size{32, 48}));
  EXPECT_THROW(apply_override(c, "train.nope", "1"), ConfigError);
  EXPECT_THROW(apply_override(c, "train..lr", "1"), ConfigError);
  EXPECT_THROW(apply_override(c, "train", "1"), ConfigError);
}

TEST(Config, RunIdCarriesConfigHash) {
  const ExperimentConfig a, b = quick_config();
  EXPECT_EQ(config_hash(a), config_hash(ExperimentConfig{}));
  EXPECT_NE(config_hash(a), config_hash(b));
  const auto id = make_run_id(a);
  EXPECT_EQ(id.size(), std::string("20260101-000000-").size() + 8);
  EXPECT_EQ(id.substr(id.size() - 8), config_hash(a));
}

// --- ablation -----------------------------------------------------------------------

TEST(Ablation, SchemeGivesTwoRunsDifferingOnlyInScheme) {
  const ExperimentConfig base;
  const auto plan = plan_ablation(base, {{"scheme", {}}});
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan[0].variant, "xy");
  EXPECT_EQ(plan[1].variant, "xy_symmetric");
  ExperimentConfig a = plan[0].config, b = plan[1].config;
  EXPECT_EQ(a.data.scheme, MaskScheme::xy);
  EXPECT_EQ(b.data.scheme, MaskScheme::xy_symmetric);
  b.data.scheme = MaskScheme::xy;
  EXPECT_EQ(a, b);
}

TEST(Ablation, EmptyFactorsGiveBaselineAndAxesResolve) {
  const auto plan = plan_ablation(ExperimentConfig{}, {});
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_EQ(plan[0].factor, "baseline");
  EXPECT_EQ(plan[0].config, ExperimentConfig{});

  const auto backbone = plan_ablation(ExperimentConfig{}, {{"layers", {}}, {"regions", {"2", "8"}}});
  ASSERT_EQ(backbone.size(), 4u);
  EXPECT_EQ(backbone[0].config.model.backbone, Backbone::vgg16_like);
  EXPECT_EQ(backbone[1].config.model.backbone, Backbone::tiny);
  EXPECT_EQ(backbone[3].config.data.regions, 8);
  EXPECT_EQ(plan_ablation(ExperimentConfig{}, {{"input_shape", {}}})[1].config.data.size, (Size{224, 160}));
  EXPECT_EQ(plan_ablation(ExperimentConfig{}, {{"train.lr", {"0.01"}}})[0].config.train.lr, 0.01);
}

TEST(Ablation, UnknownAxisListsAliases) {
  const auto msg = error_of([] { plan_ablation(ExperimentConfig{}, {{"colour", {}}}); });
  EXPECT_NE(msg.find("unknown ablation axis 'colour'"), std::string::npos);
  EXPECT_NE(msg.find("scheme"), std::string::npos);
  EXPECT_THROW(plan_ablation(ExperimentConfig{}, {{"train", {"1"}}}), ConfigError);
  EXPECT_THROW(plan_ablation(ExperimentConfig{}, {{"regions", {}}}), ConfigError);
}

// --- pipeline -----------------------------------------------------------------------

TEST(Pipeline, RunExperimentWritesRecordAndIsReproducible) {
  TempDir tmp;
  const auto c = quick_config();
  const auto r1 = run_experiment(c, tmp.path / "a");
  const auto r2 = run_experiment(c, tmp.path / "b");
  EXPECT_EQ(r1.acc_space, r2.acc_space);
  EXPECT_EQ(r1.train_acc_space, r2.train_acc_space);
  EXPECT_EQ(r1.waviness, r2.waviness);
  EXPECT_EQ(r1.wave_pattern, r1.waviness > c.analysis.wave_pattern_threshold);
  for (const auto& [name, path] : r1.artifacts) EXPECT_TRUE(fs::exists(path)) << name;
  EXPECT_TRUE(fs::exists(tmp.path / "a" / "config.json"));
  EXPECT_EQ(read_checkpoint(r1.checkpoint).epoch, 2);

  const auto found = find_records(tmp.path);
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0], r1);
  // Records are append-only.
  EXPECT_THROW(write_record(r1, tmp.path / "a"), IoError);
}

TEST(Pipeline, ExportedSplitReloadsIdentically) {
  TempDir tmp;
  const auto split = synthesize_skeletons(3, {16, 16}, 4, SplitKind::test);
  export_split(split, tmp.path);
  const auto back = load_skeleton_dataset(tmp.path, SplitKind::test, {16, 16});
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.samples[i].pixels, split.samples[i].pixels);
}

// --- report -------------------------------------------------------------------------

TEST(Report, OneRecordBundle) {
  TempDir tmp;
  const auto b = render_report({fake_record(tmp.path / "run", "r0")}, tmp.path / "report");
  EXPECT_GE(b.heatmaps.size(), 1u);
  EXPECT_GE(b.profile_plots.size(), 1u);
  EXPECT_EQ(b.attack_heatmaps.size(), 1u);
  EXPECT_TRUE(b.missing.empty());
  for (const auto& p : b.heatmaps) EXPECT_TRUE(fs::exists(p));

  std::ifstream csv(b.summary_csv);
  std::string header, row, extra;
  std::getline(csv, header);
  EXPECT_EQ(header, "Factors,Types,Acc_space,waviness,wave-pattern");
  std::getline(csv, row);
  EXPECT_EQ(row, "baseline,default,0.970,0.410,yes");
  EXPECT_FALSE(std::getline(csv, extra));
  EXPECT_TRUE(fs::exists(b.summary_md));
}

TEST(Report, MissingArtifactsAreListed) {
  TempDir tmp;
  auto good = fake_record(tmp.path / "good", "good");
  auto bad = fake_record(tmp.path / "bad", "bad");
  fs::remove(tmp.path / "bad" / "ratemaps.npy");
  const auto b = render_report({good, bad}, tmp.path / "report");
  ASSERT_EQ(b.missing.size(), 1u);
  EXPECT_NE(b.missing[0].find("bad: ratemaps"), std::string::npos);
  EXPECT_EQ(b.heatmaps.size(), 2u);
  EXPECT_EQ(b.attack_heatmaps.size(), 2u);
}

TEST(Report, NoRecordsIsAnError) {
  TempDir tmp;
  EXPECT_EQ(error_of([&] { render_report(find_records(tmp.path), tmp.path / "out"); }), "no records found");
}

TEST(Report, SineProfilePlotMarksExtrema) {
  std::vector<double> v(200);
  for (int i = 0; i < 200; ++i) v[i] = std::sin(2 * std::numbers::pi * 4 * (i + 0.5) / 200);
  const Profile1D p{v, "sine"};
  const auto report = waviness(p);
  const auto canvas = plot::profile_plot(p, report);
  EXPECT_GE(count_blobs(canvas.image(), {214, 39, 40}), 7);
  EXPECT_EQ(count_blobs(canvas.image(), {150, 150, 150}), 2);
}
