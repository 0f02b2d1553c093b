#pragma once

// SGD-with-momentum training of a Model on proxy labels, with per-epoch
// checkpoints. Checkpoint directory layout:
//
//   epoch_NNN.spnw   weights after epoch NNN (epoch_000 = initialisation)
//   checkpoint.json  configs, latest epoch, weights file, metrics history
//   metrics.csv      epoch,loss,acc_space (one row per completed epoch)

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "spacenet/dataio.hpp"
#include "spacenet/loss.hpp"
#include "spacenet/metrics.hpp"
#include "spacenet/network.hpp"

namespace spacenet {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int lr_step_epochs = 30;  ///< multiply lr by lr_decay every this many epochs
  double lr_decay = 0.1;
  int epochs = 80;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  ///< global L2 gradient-norm clip; 0 disables

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

  double lr_at(int epoch) const {
    return lr * std::pow(lr_decay, static_cast<double>(epoch / std::max(lr_step_epochs, 1)));
  }
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double acc_space = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct Checkpoint {
  std::filesystem::path dir;
  std::filesystem::path weights;
  int epoch = 0;
  ModelConfig model;
  TrainConfig train;
  std::vector<EpochMetrics> history;
};

// --- config serialisation ---------------------------------------------------------

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"backbone", to_string(c.backbone)},
       {"head_arch", to_string(c.head_arch)},
       {"num_classes_h", c.num_classes_h},
       {"num_classes_v", c.num_classes_v},
       {"input_size", {c.input_size.height, c.input_size.width}},
       {"base_width", c.base_width},
       {"hidden_width", c.hidden_width},
       {"aspp_rates", c.aspp_rates},
       {"init", to_string(c.init)},
       {"weights_path", c.weights_path}};
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"lr_step_epochs", c.lr_step_epochs},
       {"lr_decay", c.lr_decay},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"grad_clip", c.grad_clip}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.head_arch = parse_head_arch(j.at("head_arch").get<std::string>());
  j.at("num_classes_h").get_to(c.num_classes_h);
  j.at("num_classes_v").get_to(c.num_classes_v);
  c.input_size = {j.at("input_size").at(0).get<int>(), j.at("input_size").at(1).get<int>()};
  j.at("base_width").get_to(c.base_width);
  j.at("hidden_width").get_to(c.hidden_width);
  j.at("aspp_rates").get_to(c.aspp_rates);
  c.init = parse_init(j.at("init").get<std::string>());
  j.at("weights_path").get_to(c.weights_path);
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("lr").get_to(c.lr);
  j.at("momentum").get_to(c.momentum);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("lr_step_epochs").get_to(c.lr_step_epochs);
  j.at("lr_decay").get_to(c.lr_decay);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  j.at("grad_clip").get_to(c.grad_clip);
}

inline void validate(const TrainConfig& c) {
  if (!(c.lr > 0)) throw ConfigError("train.lr must be positive");
  if (c.momentum < 0 || c.momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (c.weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
  if (c.lr_step_epochs < 1) throw ConfigError("train.lr_step_epochs must be >= 1");
  if (!(c.lr_decay > 0)) throw ConfigError("train.lr_decay must be positive");
  if (c.epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (c.grad_clip < 0) throw ConfigError("train.grad_clip must be non-negative");
}

inline std::string epoch_weights_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.spnw", epoch);
  return buf;
}

inline void write_checkpoint_meta(const Checkpoint& ck) {
  nlohmann::json j;
  j["epoch"] = ck.epoch;
  j["weights"] = ck.weights.filename().string();
  j["model"] = ck.model;
  j["train"] = ck.train;
  auto& h = j["metrics_history"] = nlohmann::json::array();
  for (const auto& m : ck.history) h.push_back({{"epoch", m.epoch}, {"loss", m.loss}, {"acc_space", m.acc_space}});
  std::ofstream out(ck.dir / "checkpoint.json");
  if (!out) throw IoError("cannot write " + (ck.dir / "checkpoint.json").string());
  out << j.dump(2) << '\n';
}

/// Read checkpoint.json from a checkpoint directory.
inline Checkpoint read_checkpoint(const std::filesystem::path& dir) {
  const auto meta = dir / "checkpoint.json";
  std::ifstream in(meta);
  if (!in) throw IoError("missing checkpoint: " + meta.string() + " not found");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta.string() + ": " + e.what());
  }
  Checkpoint ck;
  ck.dir = dir;
  ck.epoch = j.at("epoch").get<int>();
  ck.weights = dir / j.at("weights").get<std::string>();
  ck.model = j.at("model").get<ModelConfig>();
  ck.train = j.at("train").get<TrainConfig>();
  for (const auto& m : j.at("metrics_history"))
    ck.history.push_back({m.at("epoch").get<int>(), m.at("loss").get<double>(), m.at("acc_space").get<double>()});
  if (!std::filesystem::exists(ck.weights)) throw IoError("missing checkpoint weights: " + ck.weights.string());
  return ck;
}

/// Rebuild the model stored in a checkpoint directory.
template <typename T = float>
Model<T> load_checkpoint_model(const Checkpoint& ck) {
  ModelConfig cfg = ck.model;
  cfg.init = InitKind::random;
  Model<T> m(cfg, 0);
  m.load_weights(ck.weights);
  return m;
}

/// Inputs of a batch of samples as (n,1,h,w) with skeleton pixels at 1.
template <typename T>
Tensor<T> skeleton_batch(const DatasetSplit& split, std::span<const std::size_t> idx) {
  std::vector<BinaryGrid> planes;
  planes.reserve(idx.size());
  for (std::size_t i : idx) planes.push_back(split.samples[i].pixels);
  return stack_planes<T>(std::span<const BinaryGrid>(planes), T(1));
}

/// Mean Acc_space of a model over a split.
template <typename T>
double evaluate_acc_space(const Model<T>& model, const DatasetSplit& split, const MaskPair& masks,
                          AccWeighting weighting = AccWeighting::as_printed, int batch_size = 16) {
  if (split.samples.empty()) throw ConfigError("cannot evaluate on an empty split");
  double total = 0.0;
  for (std::size_t s = 0; s < split.samples.size(); s += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(split.samples.size(), s + static_cast<std::size_t>(batch_size)); ++i)
      idx.push_back(i);
    const auto out = model.forward(skeleton_batch<T>(split, idx));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const ProxyLabel lab = make_proxy_label(split.samples[idx[k]], masks);
      total += acc_space(argmax_classes(out.logits_h, static_cast<int>(k)),
                         argmax_classes(out.logits_v, static_cast<int>(k)), lab, weighting);
    }
  }
  return total / static_cast<double>(split.samples.size());
}

namespace detail {

template <typename T>
class Sgd {
 public:
  Sgd(nn::Graph<T>& g, const TrainConfig& cfg) : cfg_(cfg) {
    for (auto& p : g.parameters()) {
      params_.push_back(p.param);
      velocity_.emplace_back(p.param->value.numel(), 0.0);
    }
  }

  void step(double lr) {
    double scale = 1.0;
    if (cfg_.grad_clip > 0) {
      double sq = 0.0;
      for (auto* p : params_)
        for (T g : p->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    }
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto value = params_[k]->value.values();
      const auto& grad = params_[k]->grad.values();
      auto& vel = velocity_[k];
      for (std::size_t i = 0; i < vel.size(); ++i) {
        const double g = scale * static_cast<double>(grad[i]) + cfg_.weight_decay * static_cast<double>(value[i]);
        vel[i] = cfg_.momentum * vel[i] + g;
        value[i] = static_cast<T>(static_cast<double>(value[i]) - lr * vel[i]);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<nn::Param<T>*> params_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace detail

/// Train `model` in place. When `out_dir` is set, writes the initial weights,
/// one weights file per epoch, checkpoint.json and metrics.csv there.
/// Epoch metrics are the mean batch loss and mean per-image Acc_space of the
/// forward passes made during that epoch.
template <typename T>
Checkpoint train(Model<T>& model, const DatasetSplit& split, const MaskPair& masks, const TrainConfig& cfg,
                 const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  validate(cfg);
  if (split.samples.empty()) throw ConfigError("cannot train on an empty split");
  if (masks.horizontal.labels.size() != model.config().input_size)
    throw ShapeError("masks " + to_string(masks.horizontal.labels.size()) + " do not match model input " +
                     to_string(model.config().input_size));
  if (masks.num_classes_h() > model.config().num_classes_h || masks.num_classes_v() > model.config().num_classes_v)
    throw ConfigError("mask classes exceed model head channels");

  Checkpoint ck;
  ck.model = model.config();
  ck.train = cfg;
  std::ofstream csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    ck.dir = *out_dir;
    ck.weights = *out_dir / epoch_weights_name(0);
    model.save_weights(ck.weights);
    csv.open(*out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (*out_dir / "metrics.csv").string());
    csv << "epoch,loss,acc_space\n";
    write_checkpoint_meta(ck);
  }

  std::vector<ProxyLabel> labels;
  labels.reserve(split.samples.size());
  for (const auto& s : split.samples) labels.push_back(make_proxy_label(s, masks));

  detail::Sgd<T> opt(model.graph(), cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(split.samples.size());
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double loss_sum = 0.0, acc_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<ProxyLabel> batch_labels;
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);

      auto acts = model.forward_all(skeleton_batch<T>(split, idx));
      const auto& lh = acts[model.head_h_id()];
      const auto& lv = acts[model.head_v_id()];
      auto res = weighted_ce_loss(lh, lv, std::span<const ProxyLabel>(batch_labels));
      if (!std::isfinite(res.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batches) + " (lr " + std::to_string(lr) + ")");
      for (std::size_t k = 0; k < idx.size(); ++k)
        acc_sum += acc_space(argmax_classes(lh, static_cast<int>(k)), argmax_classes(lv, static_cast<int>(k)),
                             batch_labels[k]);
      loss_sum += res.loss;
      ++batches;

      model.graph().zero_grad();
      model.backward(acts, res.grad_h, res.grad_v);
      opt.step(lr);
    }
    EpochMetrics m{epoch + 1, loss_sum / batches, acc_sum / static_cast<double>(order.size())};
    ck.history.push_back(m);
    ck.epoch = epoch + 1;
    if (out_dir) {
      ck.weights = *out_dir / epoch_weights_name(ck.epoch);
      model.save_weights(ck.weights);
      char row[96];
      std::snprintf(row, sizeof row, "%d,%.9g,%.9g\n", m.epoch, m.loss, m.acc_space);
      csv << row << std::flush;
      write_checkpoint_meta(ck);
    }
  }
  return ck;
}

}  // namespace spacenet
