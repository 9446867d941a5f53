#pragma once

#include "advdepth/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace advdepth {

/// Trainable tensor plus its gradient buffer.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<Scalar>::zeros(value.shape())) {}

  void zero_grad() { grad.array().setZero(); }
};

enum class Mode { train, eval };

template <typename Scalar>
class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return graph->requires_grad(*this); }
};

/// Tape of primitive operations recorded during one forward pass. Backward
/// walks the tape in reverse, accumulating gradients into every node that
/// depends on a parameter or a grad-requiring input. Single owner; not
/// thread safe.
template <typename Scalar>
class Graph {
 public:
  using T = Tensor<Scalar>;
  /// Receives d(loss)/d(output), the graph for accumulating into inputs, and
  /// the node's own forward value.
  using BackwardFn = std::function<void(const T& grad_out, Graph& g, const T& out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(T value) { return push(std::move(value), false, nullptr, {}); }

  /// Leaf that collects a gradient (used by finite-difference checks).
  Var<Scalar> input(T value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, nullptr, {});
  }

  /// Leaf bound to a parameter. Registering the same parameter twice returns
  /// the existing node so shared weights accumulate into one gradient.
  Var<Scalar> parameter(Parameter<Scalar>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Var<Scalar> v = push(p.value, true, nullptr, {});
    param_nodes_.emplace(&p, v.id);
    nodes_[static_cast<std::size_t>(v.id)].param = &p;
    return v;
  }

  /// Records a derived node. `fn` is kept only when some input needs a gradient.
  Var<Scalar> record(T value, std::initializer_list<Var<Scalar>> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<Scalar>>(inputs), std::move(fn));
  }
  Var<Scalar> record(T value, const std::vector<Var<Scalar>>& inputs, BackwardFn fn) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || requires_grad(in);
    return push(std::move(value), rg, rg ? std::move(fn) : BackwardFn{}, inputs);
  }

  const T& value(Var<Scalar> v) const { return node(v).value; }
  bool requires_grad(Var<Scalar> v) const { return node(v).requires_grad; }

  /// Gradient accumulated for `v` by the last backward (zeros if untouched).
  T grad(Var<Scalar> v) const {
    const Node& n = node(v);
    return n.grad.empty() ? T::zeros(n.value.shape()) : n.grad;
  }

  /// Adds `g` into the gradient slot of `v`; ignored for constants.
  void accumulate(Var<Scalar> v, const T& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape())
      throw DimensionError("gradient", "expected " + shape_str(n.value.shape()) + ", got " + shape_str(g.shape()));
    if (n.grad.empty())
      n.grad = g;
    else
      n.grad.array() += g.array();
  }
  void accumulate(Var<Scalar> v, T&& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape())
      throw DimensionError("gradient", "expected " + shape_str(n.value.shape()) + ", got " + shape_str(g.shape()));
    if (n.grad.empty())
      n.grad = std::move(g);
    else
      n.grad.array() += g.array();
  }

  /// Reverse pass from a scalar loss. Registered parameters receive their
  /// gradient (overwriting previous contents); parameters the loss does not
  /// reach end with an exact zero gradient.
  void backward(Var<Scalar> loss) {
    if (value(loss).size() != 1)
      throw InvalidArgument("backward needs a scalar loss, got shape " + shape_str(value(loss).shape()));
    for (auto& n : nodes_) n.grad = T{};
    if (requires_grad(loss)) node(loss).grad = T::constant(value(loss).shape(), Scalar(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.empty() || !n.backward) continue;
      // The callback writes only into earlier nodes, never into this slot.
      T g = std::move(n.grad);
      n.backward(g, *this, nodes_[static_cast<std::size_t>(i)].value);
      nodes_[static_cast<std::size_t>(i)].grad = std::move(g);
    }
    for (auto& n : nodes_) {
      if (!n.param) continue;
      if (n.grad.empty())
        n.param->grad = T::zeros(n.param->value.shape());
      else
        n.param->grad = n.grad;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Rolling hash of the sign patterns seen by piecewise-linear activations.
  /// Finite-difference checks compare it across perturbed evaluations to
  /// detect steps that cross a kink.
  std::uint64_t kink_signature() const noexcept { return kink_hash_; }
  void mix_kink(std::uint64_t h) noexcept { kink_hash_ = (kink_hash_ ^ h) * 1099511628211ull; }
  bool tracks_kinks() const noexcept { return track_kinks_; }
  void set_track_kinks(bool on) noexcept { track_kinks_ = on; }

 private:
  struct Node {
    T value;
    T grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<Scalar>* param = nullptr;
  };

  Var<Scalar> push(T value, bool rg, BackwardFn fn, const std::vector<Var<Scalar>>& inputs) {
    for (const auto& in : inputs)
      if (in.graph != this) throw InvalidArgument("variable belongs to a different graph");
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var<Scalar> v) {
    if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw InvalidArgument("invalid graph variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var<Scalar> v) const {
    if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw InvalidArgument("invalid graph variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  std::deque<Node> nodes_;  // stable references: value() stays valid as the tape grows
  std::unordered_map<const Parameter<Scalar>*, int> param_nodes_;
  std::uint64_t kink_hash_ = 1469598103934665603ull;
  bool track_kinks_ = false;
};

}  // namespace advdepth
