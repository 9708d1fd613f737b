// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advt/rng.hpp"
#include "advt/tensor.hpp"

namespace advt {

class Graph;
using NodeId = std::size_t;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Per-node adjoints produced by Graph::backward.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> adjoints, std::vector<char> reached)
      : adjoints_(std::move(adjoints)), reached_(std::move(reached)) {}

  /// d(output)/d(node). Zero tensor of the node's shape if unreached.
  Tensor of(Var v) const;
  bool reached(Var v) const { return v.id < reached_.size() && reached_[v.id] != 0; }

 private:
  std::vector<Tensor> adjoints_;
  std::vector<char> reached_;
};

/// Define-by-run computation graph. Every op evaluates eagerly when it is
/// recorded, so the node list is topologically ordered by construction.
///
/// A node requires a gradient when any of its inputs does; parameters are the
/// only leaves that do. stop_gradient yields a node that never does, so no
/// adjoint reaches anything upstream of it.
///
/// Every recorded value is checked for NaN/Inf and a NumericalError names the
/// offending node.
class Graph {
 public:
  /// Called during backward with the node's adjoint. `input_adjoints[i]` is
  /// null when input i does not require a gradient; otherwise it points at a
  /// tensor (zero-initialized on first use) to accumulate into.
  using BackwardFn =
      std::function<void(const Graph& graph, NodeId self, const Tensor& adjoint, std::span<Tensor* const> input_adjoints)>;

  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  /// Differentiable leaf.
  Var parameter(Tensor value);
  /// Non-differentiable leaf.
  Var constant(Tensor value);

  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Values of the requested nodes.
  std::vector<Tensor> forward(std::span<const Var> outputs) const;

  /// Reverse sweep from a scalar node. Nodes with id below `floor` are not
  /// visited, which is enough when only adjoints of nodes at or above `floor`
  /// are wanted.
  Gradients backward(Var scalar_output, NodeId floor = 0) const;

  /// Adjoint of a single node.
  Tensor gradient(Var scalar_output, Var wrt) const;

 private:
  std::deque<Node> nodes_;  // stable references across appends
};

// Elementwise binary ops with numpy-style broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

Var scale(Var x, double factor);
Var add_scalar(Var x, double c);
inline Var operator-(Var x) { return scale(x, -1.0); }

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var square(Var x);
/// max(x, floor) elementwise; gradient 1 where x > floor, else 0.
Var clamp_min(Var x, double floor);

/// Along the last axis.
Var softmax(Var x);
Var log_softmax(Var x);

/// [M,K] x [K,N] -> [M,N].
Var matmul(Var a, Var b);

/// Sum of all entries -> scalar.
Var sum(Var x);
Var mean(Var x);
/// Sum over one axis, which is removed.
Var sum_axis(Var x, std::size_t axis);
/// Euclidean norm of all entries -> scalar. Subgradient 0 at the origin.
Var l2_norm(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);

/// Rows of a [R,D] table -> [ids.size(), D]. Ids must lie in [0, R).
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// For x of shape [B,T,...]: out[b,t] = x[b, index[b*T + t]].
Var gather_time(Var x, std::span<const std::size_t> index);

/// For [B,...] operands: row b of the result is row b of `a` where keep[b]
/// is nonzero, else row b of `b`. Selection is exact.
Var where_rows(std::span<const char> keep, Var a, Var b);

/// Inverted dropout. In training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); otherwise identity.
Var dropout(Var x, double rate, RngStream& rng, bool training);

/// Same value as x; blocks all gradient flow into x.
Var stop_gradient(Var x);

/// KL(softmax(p) || softmax(q)) over the last axis, computed in log space and
/// averaged over a leading batch axis when present.
Var kl_categorical(Var p_logits, Var q_logits);

}  // namespace advt
