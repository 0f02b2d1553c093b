#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "spacenet/nn/ops.hpp"

namespace spacenet::nn {

/// Directed acyclic graph of named ops. Node 0 is the input; nodes are kept
/// in insertion order, which is a valid topological order.
template <typename T>
class Graph {
 public:
  struct Node {
    std::string name;
    std::unique_ptr<Op<T>> op;  // null for the input node
    std::vector<int> inputs;
  };

  /// Per-call activations for every node.
  struct Activations {
    std::vector<Tensor<T>> values;
    const Tensor<T>& operator[](int id) const { return values[static_cast<std::size_t>(id)]; }
  };

  Graph() { nodes_.push_back(Node{"input", nullptr, {}}); }
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  int input() const { return 0; }

  int add(std::string name, std::unique_ptr<Op<T>> op, std::vector<int> inputs) {
    if (by_name_.contains(name)) throw ConfigError("duplicate graph node name: " + name);
    for (int i : inputs)
      if (i < 0 || i >= static_cast<int>(nodes_.size()))
        throw ConfigError("node " + name + " references unknown input " + std::to_string(i));
    const int id = static_cast<int>(nodes_.size());
    by_name_[name] = id;
    nodes_.push_back(Node{std::move(name), std::move(op), std::move(inputs)});
    return id;
  }

  template <typename OpT, typename... Args>
  OpT& emplace(std::string name, std::vector<int> inputs, Args&&... args) {
    auto op = std::make_unique<OpT>(std::forward<Args>(args)...);
    OpT& ref = *op;
    add(std::move(name), std::move(op), std::move(inputs));
    return ref;
  }

  int id_of(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) {
      std::string known;
      for (const auto& n : nodes_) known += (known.empty() ? "" : ", ") + n.name;
      throw ConfigError("unknown layer '" + std::string(name) + "'; available: " + known);
    }
    return it->second;
  }
  bool has(std::string_view name) const { return by_name_.contains(std::string(name)); }
  int last() const { return static_cast<int>(nodes_.size()) - 1; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_) out.push_back(n.name);
    return out;
  }

  /// Evaluate nodes 0..upto (all nodes by default).
  Activations forward(const Tensor<T>& x, int upto = -1) const {
    if (upto < 0) upto = last();
    Activations acts;
    acts.values.resize(static_cast<std::size_t>(upto) + 1);
    acts.values[0] = x;
    std::vector<const Tensor<T>*> ins;
    std::vector<Shape4> shapes;
    for (int id = 1; id <= upto; ++id) {
      const Node& nd = nodes_[static_cast<std::size_t>(id)];
      ins.clear();
      shapes.clear();
      for (int i : nd.inputs) {
        ins.push_back(&acts.values[static_cast<std::size_t>(i)]);
        shapes.push_back(ins.back()->shape());
      }
      Tensor<T>& out = acts.values[static_cast<std::size_t>(id)];
      out = Tensor<T>(nd.op->output_shape(shapes));
      nd.op->forward(ins, out);
    }
    return acts;
  }

  /// Back-propagate seed gradients (keyed by node id) through the graph and
  /// accumulate parameter gradients. Returns the gradient w.r.t. the input.
  Tensor<T> backward(const Activations& acts, const std::map<int, Tensor<T>>& seeds) {
    const int top = static_cast<int>(acts.values.size()) - 1;
    std::vector<Tensor<T>> grads(acts.values.size());
    for (const auto& [id, g] : seeds) {
      acts[id].check_same(g);
      grads[static_cast<std::size_t>(id)] = g;
    }
    std::vector<const Tensor<T>*> ins;
    std::vector<Tensor<T>*> gins;
    for (int id = top; id >= 1; --id) {
      Tensor<T>& g = grads[static_cast<std::size_t>(id)];
      if (g.empty()) continue;
      Node& nd = nodes_[static_cast<std::size_t>(id)];
      ins.clear();
      gins.clear();
      for (int i : nd.inputs) {
        ins.push_back(&acts.values[static_cast<std::size_t>(i)]);
        Tensor<T>& gi = grads[static_cast<std::size_t>(i)];
        if (gi.empty()) gi = Tensor<T>(acts[i].shape());
        gins.push_back(&gi);
      }
      nd.op->backward(ins, acts[id], g, gins);
      g = Tensor<T>();  // release early
    }
    if (grads[0].empty()) grads[0] = Tensor<T>(acts[0].shape());
    return std::move(grads[0]);
  }

  struct NamedParam {
    std::string name;
    Param<T>* param;
  };

  std::vector<NamedParam> parameters() {
    std::vector<NamedParam> out;
    for (auto& nd : nodes_)
      if (nd.op)
        for (Param<T>* p : nd.op->params()) out.push_back({nd.name + "." + p->name, p});
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.param->grad.zero();
  }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int> by_name_;
};

}  // namespace spacenet::nn
