// Command-line driver. Every command takes an optional --config FILE and any
// number of dotted overrides such as `--train.lr 0.05`, and writes into
// <output_dir>/<run-id>/ (or --run-dir).

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "spacenet/spacenet.hpp"

namespace fs = std::filesystem;
using namespace spacenet;

namespace {

struct CommonArgs {
  std::string config;
  std::string run_dir;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_checkpoint) {
  cmd->add_option("--config", a.config, "JSON config file (defaults: desk-scale profile)");
  cmd->add_option("--run-dir", a.run_dir, "run directory (default: <output_dir>/<run-id>)");
  if (needs_checkpoint)
    cmd->add_option("--checkpoint", a.checkpoint, "checkpoint directory (default: <run-dir>/checkpoint)");
  cmd->allow_extras();
}

// Overrides arrive as the unparsed remainder: --key value pairs.
ExperimentConfig apply_overrides(ExperimentConfig c, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& flag = extras[i];
    if (flag.rfind("--", 0) != 0 || flag.size() < 3) throw ConfigError("unexpected argument '" + flag + "'");
    std::string key = flag.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override " + flag + " needs a value");
      value = extras[++i];
    }
    c = apply_override(c, key, value);
  }
  return c;
}

struct Context {
  ExperimentConfig config;
  fs::path run_dir;
  fs::path checkpoint;
};

Context resolve(const CommonArgs& a, CLI::App* cmd, bool needs_checkpoint, bool make_run_dir = true) {
  Context ctx;
  fs::path ck_dir;
  if (needs_checkpoint) {
    if (!a.checkpoint.empty())
      ck_dir = a.checkpoint;
    else if (!a.run_dir.empty())
      ck_dir = fs::path(a.run_dir) / "checkpoint";
    else
      throw ConfigError("missing checkpoint: pass --checkpoint DIR or --run-dir of a trained run");
    if (!fs::exists(ck_dir / "checkpoint.json"))
      throw IoError("missing checkpoint: " + (ck_dir / "checkpoint.json").string() + " not found (run `train` first)");
  }
  if (!a.config.empty()) {
    ctx.config = load_config(a.config);
  } else if (needs_checkpoint && fs::exists(ck_dir.parent_path() / "config.json")) {
    ctx.config = load_config(ck_dir.parent_path() / "config.json");
  }
  ctx.config = apply_overrides(ctx.config, cmd->remaining());
  ctx.run_dir = a.run_dir.empty() ? fs::path(ctx.config.output_dir) / make_run_id(ctx.config) : fs::path(a.run_dir);
  if (make_run_dir) fs::create_directories(ctx.run_dir);
  ctx.checkpoint = ck_dir;
  return ctx;
}

Model<float> load_model(const Context& ctx) {
  const Checkpoint ck = read_checkpoint(ctx.checkpoint);
  if (ck.model.input_size != ctx.config.data.size)
    throw ConfigError("checkpoint input size " + to_string(ck.model.input_size) + " differs from data.size " +
                      to_string(ctx.config.data.size));
  return load_checkpoint_model<float>(ck);
}

void save_config(const Context& ctx) {
  const fs::path p = ctx.run_dir / "config.json";
  if (!fs::exists(p)) std::ofstream(p) << emit_config(ctx.config) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-code network laboratory: training, ratemaps, waviness and grating attacks"};
  app.require_subcommand(1);

  CommonArgs prep_a, train_a, eval_a, rate_a, probe_a, wav_a, attack_a, ablate_a, report_a;
  auto* prep = app.add_subcommand("prepare-data", "materialise the configured dataset as PNGs");
  add_common(prep, prep_a, false);
  auto* trn = app.add_subcommand("train", "train a model; writes <run>/checkpoint");
  add_common(trn, train_a, false);
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint and write an experiment record");
  add_common(evl, eval_a, true);
  auto* rate = app.add_subcommand("ratemap", "export ratemaps of the analysis layer");
  add_common(rate, rate_a, true);
  auto* prb = app.add_subcommand("probe", "single- and double-slit probe responses");
  add_common(prb, probe_a, true);
  auto* wav = app.add_subcommand("waviness", "waviness of every ratemap profile");
  add_common(wav, wav_a, true);
  auto* atk = app.add_subcommand("attack", "grating frequency attack on a checkpoint");
  add_common(atk, attack_a, true);
  auto* abl = app.add_subcommand("ablate", "one-factor-at-a-time ablation");
  add_common(abl, ablate_a, false);
  std::vector<std::string> factor_args;
  abl->add_option("--factor", factor_args, "axis or axis=v1,v2 (repeatable)");
  auto* rep = app.add_subcommand("report", "render a report from the records below a directory");
  add_common(rep, report_a, false);
  std::string runs_root;
  rep->add_option("--runs", runs_root, "directory to search for records (default: output_dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) {
      const Context ctx = resolve(prep_a, prep, false);
      save_config(ctx);
      const ExperimentData d = prepare_data(ctx.config);
      export_split(d.train, ctx.run_dir / "data");
      export_split(d.test, ctx.run_dir / "data");
      export_class_map_png(ctx.run_dir / "data" / "mask_h.png", d.masks.horizontal.labels, d.masks.horizontal.max_class);
      export_class_map_png(ctx.run_dir / "data" / "mask_v.png", d.masks.vertical.labels, d.masks.vertical.max_class);
      std::printf("%zu train / %zu test samples written to %s\n", d.train.size(), d.test.size(),
                  (ctx.run_dir / "data").string().c_str());
    } else if (trn->parsed()) {
      const Context ctx = resolve(train_a, trn, false);
      save_config(ctx);
      const ExperimentData d = prepare_data(ctx.config);
      Model<float> model = build_model<float>(model_config(ctx.config), ctx.config.seed);
      const Checkpoint ck = train(model, d.train, d.masks, ctx.config.train, ctx.run_dir / "checkpoint");
      for (const auto& m : ck.history) spdlog::info("epoch {} loss {:.5f} acc_space {:.4f}", m.epoch, m.loss, m.acc_space);
      std::printf("checkpoint %s (epoch %d)\n", ck.dir.string().c_str(), ck.epoch);
    } else if (evl->parsed()) {
      const Context ctx = resolve(eval_a, evl, true);
      save_config(ctx);
      const ExperimentData d = prepare_data(ctx.config);
      const Model<float> model = load_model(ctx);
      ExperimentRecord r;
      r.run_id = ctx.run_dir.filename().string();
      r.config = to_json_doc(ctx.config);
      r.checkpoint = ctx.checkpoint.string();
      r.train_acc_space = evaluate_acc_space(model, d.train, d.masks, ctx.config.analysis.acc_weighting);
      r.acc_space = evaluate_acc_space(model, d.test, d.masks, ctx.config.analysis.acc_weighting);
      const AnalysisOutput an = analyse(model, d, ctx.config.analysis);
      r.waviness = an.waviness.mean;
      r.wave_pattern = r.waviness > ctx.config.analysis.wave_pattern_threshold;
      r.artifacts = write_analysis_artifacts(an, ctx.run_dir / "analysis");
      write_record(r, ctx.run_dir);
      std::printf("acc_space test %.4f train %.4f waviness %.4f wave_pattern %s\n", r.acc_space, r.train_acc_space,
                  r.waviness, r.wave_pattern ? "yes" : "no");
    } else if (rate->parsed()) {
      const Context ctx = resolve(rate_a, rate, true);
      const ExperimentData d = prepare_data(ctx.config);
      const auto maps = extract_ratemaps(load_model(ctx), d.test, ctx.config.analysis.layer);
      fs::create_directories(ctx.run_dir / "ratemaps");
      write_npy(ctx.run_dir / "ratemaps" / "ratemaps.npy", maps);
      write_heatmaps(ctx.run_dir / "ratemaps", "ratemap", maps);
      std::printf("%zu ratemaps of %s written to %s\n", maps.size(), ctx.config.analysis.layer.c_str(),
                  (ctx.run_dir / "ratemaps").string().c_str());
    } else if (prb->parsed()) {
      const Context ctx = resolve(probe_a, prb, true);
      const Model<float> model = load_model(ctx);
      const auto& pc = ctx.config.analysis.probe;
      nlohmann::json summary;
      for (SlitKind kind : {SlitKind::single, SlitKind::double_slit}) {
        const std::string name = kind == SlitKind::single ? "single" : "double";
        const SlitProbe probe = make_slit_probe(ctx.config.data.size, kind, pc.slit_length, pc.separation);
        const auto maps = probe_response(model, probe, ctx.config.analysis.layer);
        const fs::path dir = ctx.run_dir / "probe" / name;
        fs::create_directories(dir);
        write_npy(dir / "response.npy", maps);
        write_heatmaps(dir, "response", maps);
        const auto agg = aggregate_waviness(maps, ctx.config.analysis.waviness_threshold, Reduction::center_line);
        std::size_t intervals = 0;
        for (const auto& rep : agg.reports) intervals += rep.effective_intervals.size();
        summary[name] = {{"mean_waviness", agg.mean}, {"effective_intervals", intervals}};
      }
      std::ofstream(ctx.run_dir / "probe" / "summary.json") << summary.dump(2) << '\n';
      std::printf("%s\n", summary.dump().c_str());
    } else if (wav->parsed()) {
      const Context ctx = resolve(wav_a, wav, true);
      const ExperimentData d = prepare_data(ctx.config);
      const AnalysisOutput an = analyse(load_model(ctx), d, ctx.config.analysis);
      write_analysis_artifacts(an, ctx.run_dir / "waviness");
      std::printf("mean waviness %.4f over %zu profiles\n", an.waviness.mean, an.waviness.reports.size());
    } else if (atk->parsed()) {
      const Context ctx = resolve(attack_a, atk, true);
      const ExperimentData d = prepare_data(ctx.config);
      const Model<float> model = load_model(ctx);
      const auto adapter = make_spacenet_adapter(model, ctx.config.analysis.acc_weighting);
      const auto result = frequency_attack(adapter, attack_dataset_from_split(d.test, d.masks), ctx.config.attack.grid,
                                           ctx.config.attack.epsilon, ctx.config.attack.waveform);
      const fs::path dir = ctx.run_dir / "attack";
      fs::create_directories(dir);
      write_attack_csv(dir / "attack.csv", result);
      write_attack_heatmap(dir / "attack.png", result);
      std::ofstream(dir / "summary.json") << attack_summary(result).dump(2) << '\n';
      std::printf("%s\n", attack_summary(result).dump().c_str());
    } else if (abl->parsed()) {
      const Context ctx = resolve(ablate_a, abl, false);
      save_config(ctx);
      std::vector<AblationFactor> factors;
      for (const auto& f : factor_args) {
        AblationFactor af;
        const auto eq = f.find('=');
        af.axis = f.substr(0, eq);
        if (eq != std::string::npos) {
          std::string rest = f.substr(eq + 1);
          for (std::size_t s = 0; s <= rest.size();) {
            const auto comma = rest.find(',', s);
            const std::string v = rest.substr(s, comma == std::string::npos ? std::string::npos : comma - s);
            if (!v.empty()) af.variants.push_back(v);
            if (comma == std::string::npos) break;
            s = comma + 1;
          }
        }
        factors.push_back(af);
      }
      const auto records = run_ablation(ctx.config, factors, ctx.run_dir);
      render_report(records, ctx.run_dir / "report");
      for (const auto& r : records)
        std::printf("%s=%s acc_space %.4f waviness %.4f\n", r.factor.c_str(), r.variant.c_str(), r.acc_space, r.waviness);
    } else if (rep->parsed()) {
      const Context ctx = resolve(report_a, rep, false, false);
      const fs::path root = runs_root.empty() ? fs::path(ctx.config.output_dir) : fs::path(runs_root);
      const auto records = find_records(root);
      if (records.empty()) throw ConfigError("no records found under " + root.string());
      // Without --run-dir the report lands next to the records it summarises.
      const ReportBundle b = render_report(records, (report_a.run_dir.empty() ? root : ctx.run_dir) / "report");
      for (const auto& m : b.missing) spdlog::warn("missing artifact: {}", m);
      std::printf("report for %zu records in %s\n", records.size(), b.dir.string().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
