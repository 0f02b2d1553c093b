#pragma once

// Fully-convolutional encoder-decoder with two position-class heads.
//
// Every architecture ends in the same tail: a decoder feature map at input
// resolution ("last_hidden", conv + ReLU) feeding two 1×1 classifiers,
// "logits_h" and "logits_v". Named activations:
//
//   vgg16_like     block1..block5 (pooled outputs, strides 2..32), fc6, fc7
//   resnet50_like  stem, layer1..layer4
//   tiny           block1..block3 (strides 2, 4, 4)
//   fcn8_like      score32, fuse16, fuse8, fuse1
//   dilated        aspp, fuse1
//
// The decoders add a full-resolution skip ("skip1") so the heads can
// localise one-pixel-wide skeleton strokes.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spacenet/image_io.hpp"
#include "spacenet/nn/graph.hpp"
#include "spacenet/rng.hpp"

namespace spacenet {

enum class Backbone { vgg16_like, resnet50_like, tiny };
enum class HeadArch { fcn8_like, dilated };
enum class InitKind { random, external_weights };

inline const char* to_string(Backbone b) {
  switch (b) {
    case Backbone::vgg16_like: return "vgg16_like";
    case Backbone::resnet50_like: return "resnet50_like";
    case Backbone::tiny: return "tiny";
  }
  return "?";
}
inline const char* to_string(HeadArch h) { return h == HeadArch::fcn8_like ? "fcn8_like" : "dilated"; }
inline const char* to_string(InitKind i) { return i == InitKind::random ? "random" : "external_weights"; }

inline Backbone parse_backbone(std::string_view s) {
  if (s == "vgg16_like") return Backbone::vgg16_like;
  if (s == "resnet50_like") return Backbone::resnet50_like;
  if (s == "tiny") return Backbone::tiny;
  throw ConfigError("unknown backbone '" + std::string(s) + "' (expected vgg16_like, resnet50_like, tiny)");
}
inline HeadArch parse_head_arch(std::string_view s) {
  if (s == "fcn8_like") return HeadArch::fcn8_like;
  if (s == "dilated") return HeadArch::dilated;
  throw ConfigError("unknown head_arch '" + std::string(s) + "' (expected fcn8_like, dilated)");
}
inline InitKind parse_init(std::string_view s) {
  if (s == "random") return InitKind::random;
  if (s == "external_weights") return InitKind::external_weights;
  throw ConfigError("unknown init '" + std::string(s) + "' (expected random, external_weights)");
}

struct ModelConfig {
  Backbone backbone = Backbone::vgg16_like;
  HeadArch head_arch = HeadArch::fcn8_like;
  int num_classes_h = 21;
  int num_classes_v = 21;
  Size input_size{224, 224};
  int base_width = 64;    ///< channels of the first backbone stage (VGG16: 64)
  int hidden_width = 64;  ///< channels of the decoder and last hidden layer
  std::vector<int> aspp_rates{6, 12, 18, 24};
  InitKind init = InitKind::random;
  std::string weights_path;  ///< used when init == external_weights

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::string_view kLastHidden = "last_hidden";

template <typename T = float>
class Model {
 public:
  using Graph = nn::Graph<T>;
  using scalar_type = T;

  struct Output {
    Tensor<T> logits_h;
    Tensor<T> logits_v;
  };

  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    validate();
    Rng rng(seed);
    Builder b{graph_, rng};
    switch (cfg_.backbone) {
      case Backbone::vgg16_like: build_vgg(b); break;
      case Backbone::resnet50_like: build_resnet(b); break;
      case Backbone::tiny: build_tiny(b); break;
    }
    head_h_ = graph_.id_of("logits_h");
    head_v_ = graph_.id_of("logits_v");
  }

  const ModelConfig& config() const { return cfg_; }
  Graph& graph() { return graph_; }
  const Graph& graph() const { return graph_; }

  Output forward(const Tensor<T>& x) const {
    check_input(x);
    auto acts = graph_.forward(x);
    return {std::move(acts.values[static_cast<std::size_t>(head_h_)]),
            std::move(acts.values[static_cast<std::size_t>(head_v_)])};
  }

  typename Graph::Activations forward_all(const Tensor<T>& x) const {
    check_input(x);
    return graph_.forward(x);
  }

  /// Output of a named layer for an input batch.
  Tensor<T> activation(const Tensor<T>& x, std::string_view layer) const {
    check_input(x);
    const int id = graph_.id_of(layer);
    auto acts = graph_.forward(x, id);
    return std::move(acts.values[static_cast<std::size_t>(id)]);
  }

  std::vector<std::string> layer_names() const { return graph_.names(); }
  int head_h_id() const { return head_h_; }
  int head_v_id() const { return head_v_; }

  /// Backward pass from head gradients; accumulates parameter gradients.
  void backward(const typename Graph::Activations& acts, const Tensor<T>& grad_h, const Tensor<T>& grad_v) {
    std::map<int, Tensor<T>> seeds;
    seeds.emplace(head_h_, grad_h);
    seeds.emplace(head_v_, grad_v);
    graph_.backward(acts, seeds);
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& p : graph_.parameters()) n += p.param->value.numel();
    return n;
  }

  // --- weights blob ---------------------------------------------------------------
  // Layout (little-endian): "SPNW" | u32 version=1 | u32 tensor count |
  // per tensor: u32 name length, name bytes, u64 element count, f32 values.

  void save_weights(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weights " + path.string());
    auto params = graph_.parameters();
    out.write("SPNW", 4);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      write_u32(out, static_cast<std::uint32_t>(p.name.size()));
      out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      const std::uint64_t n = p.param->value.numel();
      out.write(reinterpret_cast<const char*>(&n), sizeof n);
      for (T v : p.param->value.values()) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof f);
      }
    }
    if (!out) throw IoError("failed writing weights " + path.string());
  }

  void load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read weights " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SPNW", 4) != 0) throw IoError(path.string() + ": not a weights blob");
    if (read_u32(in) != 1) throw IoError(path.string() + ": unsupported weights version");
    auto params = graph_.parameters();
    if (read_u32(in) != params.size())
      throw IoError(path.string() + ": tensor count does not match the model");
    for (auto& p : params) {
      std::string name(read_u32(in), '\0');
      in.read(name.data(), static_cast<std::streamsize>(name.size()));
      std::uint64_t n = 0;
      in.read(reinterpret_cast<char*>(&n), sizeof n);
      if (!in || name != p.name || n != p.param->value.numel())
        throw IoError(path.string() + ": tensor '" + name + "' does not match model tensor '" + p.name + "'");
      for (T& v : p.param->value.values()) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), sizeof f);
        v = static_cast<T>(f);
      }
    }
    if (!in) throw IoError(path.string() + ": truncated weights blob");
  }

  /// All parameter values flattened in parameter order.
  std::vector<T> state() {
    std::vector<T> out;
    for (auto& p : graph_.parameters())
      out.insert(out.end(), p.param->value.values().begin(), p.param->value.values().end());
    return out;
  }

 private:
  struct Builder {
    Graph& g;
    Rng& rng;

    int conv(const std::string& name, int src, nn::ConvSpec spec, double gain) {
      auto& op = g.template emplace<nn::Conv2d<T>>(name, {src}, spec);
      op.init_normal(rng, gain);
      return g.last();
    }
    int conv_relu(const std::string& conv_name, const std::string& relu_name, int src, nn::ConvSpec spec) {
      const int c = conv(conv_name, src, spec, std::sqrt(2.0));
      g.template emplace<nn::Relu<T>>(relu_name, {c});
      return g.last();
    }
    int relu(const std::string& name, int src) {
      g.template emplace<nn::Relu<T>>(name, {src});
      return g.last();
    }
    int pool(const std::string& name, int src) {
      g.template emplace<nn::MaxPool2<T>>(name, {src});
      return g.last();
    }
    int resize(const std::string& name, int src, Size to) {
      g.template emplace<nn::ResizeBilinear<T>>(name, {src}, to.height, to.width);
      return g.last();
    }
    int add(const std::string& name, std::vector<int> srcs) {
      g.template emplace<nn::Add<T>>(name, std::move(srcs));
      return g.last();
    }
    int concat(const std::string& name, std::vector<int> srcs) {
      g.template emplace<nn::Concat<T>>(name, std::move(srcs));
      return g.last();
    }
  };

  static nn::ConvSpec k3(int in, int out, int dilation = 1) {
    return {in, out, 3, 1, dilation, dilation, true};
  }
  static nn::ConvSpec k1(int in, int out, int stride = 1) { return {in, out, 1, stride, 0, 1, true}; }


  void validate() const {
    if (!cfg_.input_size.positive()) throw ConfigError("model input size must be positive");
    if (cfg_.num_classes_h < 2 || cfg_.num_classes_v < 2)
      throw ConfigError("each head needs at least 2 classes");
    if (cfg_.base_width < 1 || cfg_.hidden_width < 1) throw ConfigError("layer widths must be positive");
    const int min_extent = std::min(cfg_.input_size.height, cfg_.input_size.width);
    const int needed = cfg_.backbone == Backbone::tiny ? 4 : 32;
    if (min_extent < needed)
      throw ConfigError(std::string(to_string(cfg_.backbone)) + " needs inputs of at least " +
                        std::to_string(needed) + " pixels per side");
    if (cfg_.head_arch == HeadArch::dilated && cfg_.aspp_rates.empty())
      throw ConfigError("dilated head needs at least one ASPP rate");
  }

  void check_input(const Tensor<T>& x) const {
    if (x.c() != 1 || x.h() != cfg_.input_size.height || x.w() != cfg_.input_size.width)
      throw ShapeError("model expects (N,1," + std::to_string(cfg_.input_size.height) + "," +
                       std::to_string(cfg_.input_size.width) + ") input, got " + to_string(x.shape()));
  }

  // Shared tail: coarse decoder output → input resolution, fused with a
  // full-resolution skip, then the last hidden layer and both heads.
  void build_tail(Builder& b, int coarse, int fullres, int fullres_channels) {
    const int D = cfg_.hidden_width;
    const int up = b.resize("up1", coarse, cfg_.input_size);
    const int skip = b.conv("skip1", fullres, k1(fullres_channels, D), 1.0);
    const int fuse = b.add("fuse1", {up, skip});
    const int hidden = b.conv_relu("last_hidden.conv", std::string(kLastHidden), fuse, k3(D, D));
    b.conv("logits_h", hidden, k1(D, cfg_.num_classes_h), 1.0);
    b.conv("logits_v", hidden, k1(D, cfg_.num_classes_v), 1.0);
  }

  // FCN-8s style fusion: stride-32 scores, upsampled and summed with
  // projections of the stride-16 and stride-8 features.
  int build_fcn8(Builder& b, int s32, int c32, int s16, int c16, int s8, int c8) {
    const int D = cfg_.hidden_width;
    const int score = b.conv("score32", s32, k1(c32, D), 1.0);
    const int up16 = b.resize("up16", score, size_of(s16));
    const int skip16 = b.conv("skip16", s16, k1(c16, D), 1.0);
    const int fuse16 = b.add("fuse16", {up16, skip16});
    const int up8 = b.resize("up8", fuse16, size_of(s8));
    const int skip8 = b.conv("skip8", s8, k1(c8, D), 1.0);
    return b.add("fuse8", {up8, skip8});
  }

  // DeepLab-v2 style atrous spatial pyramid: parallel dilated 3×3 branches summed.
  int build_aspp(Builder& b, int src, int channels) {
    const int D = cfg_.hidden_width;
    std::vector<int> branches;
    for (int r : cfg_.aspp_rates)
      branches.push_back(b.conv("aspp.rate" + std::to_string(r), src, k3(channels, D, r), 1.0));
    if (branches.size() == 1) return b.relu("aspp", branches[0]);
    const int sum = b.add("aspp.sum", branches);
    return b.relu("aspp", sum);
  }

  // Spatial size of a node's output, by a dry shape pass over the graph.
  Size size_of(int id) const {
    std::vector<Shape4> shapes(static_cast<std::size_t>(id) + 1);
    shapes[0] = Shape4{1, 1, cfg_.input_size.height, cfg_.input_size.width};
    for (int i = 1; i <= id; ++i) {
      std::vector<Shape4> ins;
      for (int s : graph_.node(i).inputs) ins.push_back(shapes[static_cast<std::size_t>(s)]);
      shapes[static_cast<std::size_t>(i)] = graph_.node(i).op->output_shape(ins);
    }
    return {shapes.back().h, shapes.back().w};
  }

  void build_vgg(Builder& b) {
    const int w = cfg_.base_width;
    const int widths[5] = {w, 2 * w, 4 * w, 8 * w, 8 * w};
    const int convs[5] = {2, 2, 3, 3, 3};
    const bool dilated = cfg_.head_arch == HeadArch::dilated;
    int x = graph_.input();
    int in_c = 1;
    int block_out[5] = {};
    int block1_features = 0;
    for (int blk = 0; blk < 5; ++blk) {
      const std::string name = "block" + std::to_string(blk + 1);
      // The dilated variant keeps stride 8: no pooling after blocks 4 and 5,
      // and block 5 convolutions dilate by 2.
      const int dil = (dilated && blk == 4) ? 2 : 1;
      for (int j = 0; j < convs[blk]; ++j) {
        const std::string tag = name + ".conv" + std::to_string(j + 1);
        const bool last_conv = j + 1 == convs[blk];
        const bool pooled = !(dilated && blk >= 3);
        const std::string relu_name = (last_conv && !pooled) ? name : name + ".relu" + std::to_string(j + 1);
        x = b.conv_relu(tag, relu_name, x, k3(in_c, widths[blk], dil));
        in_c = widths[blk];
      }
      if (blk == 0) block1_features = x;
      if (!(dilated && blk >= 3)) x = b.pool(name, x);
      block_out[blk] = x;
    }
    if (dilated) {
      const int aspp = build_aspp(b, block_out[4], widths[4]);
      build_tail(b, aspp, block1_features, widths[0]);
      return;
    }
    const int fc6 = b.conv_relu("fc6.conv", "fc6", block_out[4], k3(widths[4], 16 * w));
    const int fc7 = b.conv_relu("fc7.conv", "fc7", fc6, k1(16 * w, 16 * w));
    const int fuse8 = build_fcn8(b, fc7, 16 * w, block_out[3], widths[3], block_out[2], widths[2]);
    build_tail(b, fuse8, block1_features, widths[0]);
  }

  // Bottleneck residual stages [3, 4, 6, 3]. Without normalisation layers the
  // last convolution of every residual branch starts at zero so each block
  // is the identity (or its projection) at initialisation.
  void build_resnet(Builder& b) {
    const int w = cfg_.base_width;
    const bool dilated = cfg_.head_arch == HeadArch::dilated;
    const int fullres = b.conv_relu("fullres.conv", "fullres", graph_.input(), k3(1, w));
    int x = b.conv_relu("stem.conv", "stem", graph_.input(), nn::ConvSpec{1, w, 7, 2, 3, 1, true});
    x = b.pool("stem.pool", x);
    int in_c = w;
    const int blocks[4] = {3, 4, 6, 3};
    int stage_out[4] = {};
    int stage_channels[4] = {};
    for (int s = 0; s < 4; ++s) {
      const int mid = w << s;
      const int out_c = 4 * mid;
      int stride = s == 0 ? 1 : 2;
      int dil = 1;
      if (dilated && s >= 2) {
        stride = 1;
        dil = s == 2 ? 2 : 4;
      }
      for (int k = 0; k < blocks[s]; ++k) {
        const std::string name = "layer" + std::to_string(s + 1) + "." + std::to_string(k);
        const int st = k == 0 ? stride : 1;
        const int a = b.conv_relu(name + ".conv1", name + ".relu1", x, k1(in_c, mid));
        const int c = b.conv_relu(name + ".conv2", name + ".relu2", a,
                                  nn::ConvSpec{mid, mid, 3, st, dil, dil, true});
        const int e = b.conv(name + ".conv3", c, k1(mid, out_c), 0.0);
        int shortcut = x;
        if (st != 1 || in_c != out_c) shortcut = b.conv(name + ".proj", x, k1(in_c, out_c, st), 1.0);
        const int sum = b.add(name + ".add", {e, shortcut});
        const bool last = k + 1 == blocks[s];
        x = b.relu(last ? "layer" + std::to_string(s + 1) : name + ".out", sum);
        in_c = out_c;
      }
      stage_out[s] = x;
      stage_channels[s] = in_c;
    }
    if (dilated) {
      const int aspp = build_aspp(b, stage_out[3], stage_channels[3]);
      build_tail(b, aspp, fullres, w);
      return;
    }
    const int fuse8 = build_fcn8(b, stage_out[3], stage_channels[3], stage_out[2], stage_channels[2],
                                 stage_out[1], stage_channels[1]);
    build_tail(b, fuse8, fullres, w);
  }

  // Shallow arm: three convolutions (two of them stride 2), then a minimal
  // decoder. The third convolution is a dilated 9×9 so that every stride-4
  // cell can see at least one image border on a 64-pixel input.
  void build_tiny(Builder& b) {
    const int w = cfg_.base_width;
    const int c1 = b.conv_relu("block1.conv", "block1", graph_.input(), nn::ConvSpec{1, w, 5, 2, 2, 1, true});
    const int c2 = b.conv_relu("block2.conv", "block2", c1, nn::ConvSpec{w, 2 * w, 5, 2, 2, 1, true});
    const int c3 = b.conv_relu("block3.conv", "block3", c2, nn::ConvSpec{2 * w, 2 * w, 9, 1, 8, 2, true});
    const int D = cfg_.hidden_width;
    const int up = b.resize("up1", c3, cfg_.input_size);
    const int cat = b.concat("fuse1", {up, graph_.input()});
    const int hidden = b.conv_relu("last_hidden.conv", std::string(kLastHidden), cat, k1(2 * w + 1, D));
    b.conv("logits_h", hidden, k1(D, cfg_.num_classes_h), 1.0);
    b.conv("logits_v", hidden, k1(D, cfg_.num_classes_v), 1.0);
  }

  static void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  ModelConfig cfg_;
  Graph graph_;
  int head_h_ = -1;
  int head_v_ = -1;
};

/// Build a model and, for external-weights initialisation, load its blob.
template <typename T = float>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed = 0) {
  Model<T> m(cfg, seed);
  if (cfg.init == InitKind::external_weights) {
    if (cfg.weights_path.empty()) throw ConfigError("external_weights init needs model.weights_path");
    m.load_weights(cfg.weights_path);
  }
  return m;
}

}  // namespace spacenet
