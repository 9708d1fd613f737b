// SPDX-License-Identifier: Apache-2.0
#include "advt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "advt/errors.hpp"

namespace advt {

const Tensor& Var::value() const { return graph->value(*this); }

Tensor Gradients::of(Var v) const {
  if (reached(v)) return adjoints_[v.id];
  return Tensor(v.shape(), 0.0);
}

Var Graph::parameter(Tensor value) {
  if (!value.all_finite()) {
    throw NumericalError("node " + std::to_string(nodes_.size()) + " (parameter): non-finite value");
  }
  nodes_.push_back(Node{"parameter", std::move(value), {}, nullptr, true});
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) {
    throw NumericalError("node " + std::to_string(nodes_.size()) + " (constant): non-finite value");
  }
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  const NodeId id = nodes_.size();
  if (!value.all_finite()) {
    throw NumericalError("node " + std::to_string(id) + " (" + std::string(op) + "): non-finite value");
  }
  Node node{op, std::move(value), {}, nullptr, false};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.graph != this) throw std::invalid_argument("operand belongs to a different graph");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, id};
}

std::vector<Tensor> Graph::forward(std::span<const Var> outputs) const {
  std::vector<Tensor> out;
  out.reserve(outputs.size());
  for (const Var& v : outputs) out.push_back(value(v));
  return out;
}

Gradients Graph::backward(Var scalar_output, NodeId floor) const {
  const Tensor& out_value = value(scalar_output);
  if (out_value.rank() != 0) {
    throw ShapeError("backward requires a scalar output, got shape " + shape_string(out_value.shape()));
  }
  std::vector<Tensor> adjoints(nodes_.size());
  std::vector<char> reached(nodes_.size(), 0);
  adjoints[scalar_output.id] = Tensor(Shape{}, 1.0);
  reached[scalar_output.id] = 1;

  std::vector<Tensor*> input_adjoints;
  for (NodeId i = scalar_output.id + 1; i-- > floor;) {
    if (!reached[i]) continue;
    const Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward) continue;
    input_adjoints.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const NodeId j = node.inputs[k];
      if (!nodes_[j].requires_grad) continue;
      if (!reached[j]) {
        adjoints[j] = Tensor(nodes_[j].value.shape(), 0.0);
        reached[j] = 1;
      }
      input_adjoints[k] = &adjoints[j];
    }
    node.backward(*this, i, adjoints[i], input_adjoints);
  }
  return Gradients(std::move(adjoints), std::move(reached));
}

Tensor Graph::gradient(Var scalar_output, Var wrt) const {
  return backward(scalar_output, wrt.id).of(wrt);
}

namespace {

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw std::invalid_argument("unbound Var");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
  return graph_of(a);
}

// Index maps from a broadcast output back into each operand. Empty maps mean
// the operand already has the output shape.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    strides[d + offset] = in[d] == 1 ? 0 : stride;
    stride *= in[d];
  }
  const std::size_t n = shape_size(out);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = pos;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      pos += strides[d];
      if (counter[d] < out[d]) break;
      pos -= strides[d] * counter[d];
      counter[d] = 0;
    }
  }
  return index;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, std::string_view op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    plan.out[rank - 1 - k] = std::max(da, db);
  }
  if (a != plan.out) plan.a_index = broadcast_index(a, plan.out);
  if (b != plan.out) plan.b_index = broadcast_index(b, plan.out);
  return plan;
}

inline std::size_t map_index(const std::vector<std::size_t>& index, std::size_t i) {
  return index.empty() ? i : index[i];
}

enum class Binary { kAdd, kSub, kMul, kDiv };

Var binary(Binary kind, Var a, Var b) {
  Graph& g = graph_of(a, b);
  static constexpr std::string_view names[] = {"add", "sub", "mul", "div"};
  const std::string_view name = names[static_cast<int>(kind)];
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(av.shape(), bv.shape(), name));
  Tensor out(plan->out);
  auto o = out.data();
  auto x = av.data();
  auto y = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double l = x[map_index(plan->a_index, i)];
    const double r = y[map_index(plan->b_index, i)];
    switch (kind) {
      case Binary::kAdd: o[i] = l + r; break;
      case Binary::kSub: o[i] = l - r; break;
      case Binary::kMul: o[i] = l * r; break;
      case Binary::kDiv: o[i] = l / r; break;
    }
  }
  return g.record(name, std::move(out), {a, b},
                  [kind, plan](const Graph& graph, NodeId self, const Tensor& adj, std::span<Tensor* const> grads) {
                    const auto& node = graph.node(self);
                    auto x = graph.node(node.inputs[0]).value.data();
                    auto y = graph.node(node.inputs[1]).value.data();
                    auto d = adj.data();
                    if (Tensor* ga = grads[0]) {
                      auto da = ga->data();
                      for (std::size_t i = 0; i < d.size(); ++i) {
                        const std::size_t ia = map_index(plan->a_index, i);
                        const std::size_t ib = map_index(plan->b_index, i);
                        switch (kind) {
                          case Binary::kAdd:
                          case Binary::kSub: da[ia] += d[i]; break;
                          case Binary::kMul: da[ia] += d[i] * y[ib]; break;
                          case Binary::kDiv: da[ia] += d[i] / y[ib]; break;
                        }
                      }
                    }
                    if (Tensor* gb = grads[1]) {
                      auto db = gb->data();
                      for (std::size_t i = 0; i < d.size(); ++i) {
                        const std::size_t ia = map_index(plan->a_index, i);
                        const std::size_t ib = map_index(plan->b_index, i);
                        switch (kind) {
                          case Binary::kAdd: db[ib] += d[i]; break;
                          case Binary::kSub: db[ib] -= d[i]; break;
                          case Binary::kMul: db[ib] += d[i] * x[ia]; break;
                          case Binary::kDiv: db[ib] -= d[i] * x[ia] / (y[ib] * y[ib]); break;
                        }
                      }
                    }
                  });
}

// Elementwise op whose derivative is expressed through input x and output y.
template <class F, class DF>
Var unary(std::string_view name, Var x, F f, DF df) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  auto in = xv.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  return g.record(name, std::move(out), {x},
                  [df](const Graph& graph, NodeId self, const Tensor& adj, std::span<Tensor* const> grads) {
                    const auto& node = graph.node(self);
                    auto xs = graph.node(node.inputs[0]).value.data();
                    auto ys = node.value.data();
                    auto d = adj.data();
                    auto dx = grads[0]->data();
                    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * df(xs[i], ys[i]);
                  });
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t dim = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.dim = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

std::size_t last_axis_width(const Tensor& t, std::string_view op) {
  if (t.rank() == 0 || t.shape().back() == 0) {
    throw ShapeError(std::string(op) + " needs a non-empty last axis, got " + shape_string(t.shape()));
  }
  return t.shape().back();
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Binary::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Binary::kMul, a, b); }
Var div(Var a, Var b) { return binary(Binary::kDiv, a, b); }

Var scale(Var x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
  return unary("sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp_min(Var x, double floor) {
  return unary("clamp_min", x, [floor](double v) { return v > floor ? v : floor; },
               [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Var softmax(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const std::size_t width = last_axis_width(xv, "softmax");
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.size() / width; ++r) {
    const double* in = xv.data().data() + r * width;
    double* o = out.data().data() + r * width;
    const double m = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += (o[c] = std::exp(in[c] - m));
    for (std::size_t c = 0; c < width; ++c) o[c] /= z;
  }
  return g.record("softmax", std::move(out), {x},
                  [width](const Graph& graph, NodeId self, const Tensor& adj, std::span<Tensor* const> grads) {
                    const Tensor& y = graph.node(self).value;
                    for (std::size_t r = 0; r < y.size() / width; ++r) {
                      const double* yr = y.data().data() + r * width;
                      const double* dr = adj.data().data() + r * width;
                      double* gx = grads[0]->data().data() + r * width;
                      double inner = 0.0;
                      for (std::size_t c = 0; c < width; ++c) inner += dr[c] * yr[c];
                      for (std::size_t c = 0; c < width; ++c) gx[c] += yr[c] * (dr[c] - inner);
                    }
                  });
}

Var log_softmax(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const std::size_t width = last_axis_width(xv, "log_softmax");
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.size() / width; ++r) {
    const double* in = xv.data().data() + r * width;
    double* o = out.data().data() + r * width;
    const double m = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += std::exp(in[c] - m);
    const double lse = m + std::log(z);
    for (std::size_t c = 0; c < width; ++c) o[c] = in[c] - lse;
  }
  return g.record("log_softmax", std::move(out), {x},
                  [width](const Graph& graph, NodeId self, const Tensor& adj, std::span<Tensor* const> grads) {
                    const Tensor& y = graph.node(self).value;
                    for (std::size_t r = 0; r < y.size() / width; ++r) {
                      const double* yr = y.data().data() + r * width;
                      const double* dr = adj.data().data() + r * width;
                      double* gx = grads[0]->data().data() + r * width;
                      double total = 0.0;
                      for (std::size_t c = 0; c < width; ++c) total += dr[c];
                      for (std::size_t c = 0; c < width; ++c) gx[c] += dr[c] - std::exp(yr[c]) * total;
                    }
                  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  const double* A = av.data().data();
  const double* B = bv.data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return g.record("matmul", std::move(out), {a, b},
                  [m, k, n](const Graph& graph, NodeId self, const Tensor& adj, std::span<Tensor* const> grads) {
                    const auto& node = graph.node(self);
                    const double* A = graph.node(node.inputs[0]).value.data().data();
                    const double* B = graph.node(node.inputs[1]).value.data().data();
                    const double* D = adj.data().data();
                    if (Tensor* ga = grads[0]) {
                      double* dA = ga->data().data();
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                          double s = 0.0;
                          for (std::size_t j = 0; j < n; ++j) s += D[i * n + j] * B[p * n + j];
                          dA[i * k + p] += s;
                        }
                      }
                    }
                    if (Tensor* gb = grads[1]) {
                      double* dB = gb->data().data();
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = A[i * k + p];
                          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * D[i * n + j];
                        }
                      }
                    }
                  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return g.record("sum", Tensor::scalar(s), {x},
                  [](const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    const double d = adj.item();
                    for (double& v : grads[0]->data()) v += d;
                  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_axis(Var x, std::size_t axis) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const AxisSplit s = split_at(xv.shape(), axis);
  Shape out_shape = xv.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const double* in = xv.data().data();
  double* o = out.data().data();
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t d = 0; d < s.dim; ++d)
      for (std::size_t i = 0; i < s.inner; ++i) o[a * s.inner + i] += in[(a * s.dim + d) * s.inner + i];
  return g.record("sum_axis", std::move(out), {x},
                  [s](const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    const double* d = adj.data().data();
                    double* gx = grads[0]->data().data();
                    for (std::size_t a = 0; a < s.outer; ++a)
                      for (std::size_t k = 0; k < s.dim; ++k)
                        for (std::size_t i = 0; i < s.inner; ++i) gx[(a * s.dim + k) * s.inner + i] += d[a * s.inner + i];
                  });
}

Var l2_norm(Var x) {
  Graph& g = graph_of(x);
  const double norm = advt::l2_norm(x.value().data());
  return g.record("l2_norm", Tensor::scalar(norm), {x},
                  [](const Graph& graph, NodeId self, const Tensor& adj, std::span<Tensor* const> grads) {
                    const auto& node = graph.node(self);
                    const double n = node.value.item();
                    if (n == 0.0) return;
                    const double factor = adj.item() / n;
                    auto xs = graph.node(node.inputs[0]).value.data();
                    auto gx = grads[0]->data();
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * xs[i];
                  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Graph& g = graph_of(parts[0]);
  const Shape& first = parts[0].shape();
  std::vector<AxisSplit> splits;
  std::size_t total = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    const Shape& sh = p.shape();
    bool ok = sh.size() == first.size() && axis < sh.size();
    for (std::size_t d = 0; ok && d < sh.size(); ++d) ok = d == axis || sh[d] == first[d];
    if (!ok) throw ShapeError("concat: incompatible shape " + shape_string(sh) + " with " + shape_string(first));
    splits.push_back(split_at(sh, axis));
    total += sh[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t outer = splits[0].outer, inner = splits[0].inner;
  double* o = out.data().data();
  for (std::size_t a = 0; a < outer; ++a) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t block = splits[k].dim * inner;
      const double* src = parts[k].value().data().data() + a * block;
      std::copy(src, src + block, o + (a * total + offset) * inner);
      offset += splits[k].dim;
    }
  }
  std::vector<std::size_t> dims;
  for (const auto& s : splits) dims.push_back(s.dim);
  return g.record("concat", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [dims, outer, inner, total](const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    const double* d = adj.data().data();
                    for (std::size_t a = 0; a < outer; ++a) {
                      std::size_t offset = 0;
                      for (std::size_t k = 0; k < dims.size(); ++k) {
                        const std::size_t block = dims[k] * inner;
                        if (Tensor* gk = grads[k]) {
                          double* dst = gk->data().data() + a * block;
                          const double* src = d + (a * total + offset) * inner;
                          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                        }
                        offset += dims[k];
                      }
                    }
                  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const AxisSplit s = split_at(xv.shape(), axis);
  if (begin > end || end > s.dim) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for axis " +
                     std::to_string(axis) + " of " + shape_string(xv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  const std::size_t width = (end - begin) * s.inner;
  for (std::size_t a = 0; a < s.outer; ++a) {
    const double* src = xv.data().data() + (a * s.dim + begin) * s.inner;
    std::copy(src, src + width, out.data().data() + a * width);
  }
  return g.record("slice", std::move(out), {x},
                  [s, begin, width](const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    for (std::size_t a = 0; a < s.outer; ++a) {
                      const double* src = adj.data().data() + a * width;
                      double* dst = grads[0]->data().data() + (a * s.dim + begin) * s.inner;
                      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                    }
                  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  return g.record("reshape", x.value().reshaped(std::move(shape)), {x},
                  [](const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    auto dst = grads[0]->data();
                    auto src = adj.data();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Graph& g = graph_of(table);
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("gather_rows needs a matrix, got " + shape_string(tv.shape()));
  const std::size_t rows = tv.dim(0), width = tv.dim(1);
  Tensor out(Shape{ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                              std::to_string(rows) + " rows");
    }
    const double* src = tv.data().data() + ids[r] * width;
    std::copy(src, src + width, out.data().data() + r * width);
  }
  return g.record("gather_rows", std::move(out), {table},
                  [index = std::vector<std::size_t>(ids.begin(), ids.end()), width](
                      const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    double* dst = grads[0]->data().data();
                    const double* src = adj.data().data();
                    for (std::size_t r = 0; r < index.size(); ++r)
                      for (std::size_t c = 0; c < width; ++c) dst[index[r] * width + c] += src[r * width + c];
                  });
}

Var gather_time(Var x, std::span<const std::size_t> index) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw ShapeError("gather_time needs rank >= 2, got " + shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0), steps = xv.dim(1);
  const std::size_t inner = xv.size() / (batch * steps);
  if (index.size() != batch * steps) throw ShapeError("gather_time: index size mismatch");
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t from = index[b * steps + t];
      if (from >= steps) throw std::out_of_range("gather_time: step index out of range");
      const double* src = xv.data().data() + (b * steps + from) * inner;
      std::copy(src, src + inner, out.data().data() + (b * steps + t) * inner);
    }
  }
  return g.record("gather_time", std::move(out), {x},
                  [idx = std::vector<std::size_t>(index.begin(), index.end()), steps, inner](
                      const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    double* dst = grads[0]->data().data();
                    const double* src = adj.data().data();
                    for (std::size_t bt = 0; bt < idx.size(); ++bt) {
                      const std::size_t b = bt / steps;
                      for (std::size_t i = 0; i < inner; ++i) dst[(b * steps + idx[bt]) * inner + i] += src[bt * inner + i];
                    }
                  });
}

Var where_rows(std::span<const char> keep, Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape() || av.rank() == 0 || av.dim(0) != keep.size()) {
    throw ShapeError("where_rows: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()) + " with " +
                     std::to_string(keep.size()) + " selectors");
  }
  const std::size_t inner = av.size() / keep.size();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const double* src = (keep[r] ? av : bv).data().data() + r * inner;
    std::copy(src, src + inner, out.data().data() + r * inner);
  }
  return g.record("where_rows", std::move(out), {a, b},
                  [sel = std::vector<char>(keep.begin(), keep.end()), inner](
                      const Graph&, NodeId, const Tensor& adj, std::span<Tensor* const> grads) {
                    for (std::size_t r = 0; r < sel.size(); ++r) {
                      Tensor* target = grads[sel[r] ? 0 : 1];
                      if (target == nullptr) continue;
                      double* dst = target->data().data() + r * inner;
                      const double* src = adj.data().data() + r * inner;
                      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                    }
                  });
}

Var dropout(Var x, double rate, RngStream& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> factors(xv.size());
  for (double& f : factors) f = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < factors.size(); ++i) out[i] = xv[i] * factors[i];
  return g.record("dropout", std::move(out), {x},
                  [factors = std::move(factors)](const Graph&, NodeId, const Tensor& adj,
                                                 std::span<Tensor* const> grads) {
                    auto dst = grads[0]->data();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += adj[i] * factors[i];
                  });
}

Var stop_gradient(Var x) {
  Graph& g = graph_of(x);
  // Recorded without inputs: nothing upstream can receive an adjoint.
  return g.record("stop_gradient", x.value(), {}, nullptr);
}

Var kl_categorical(Var p_logits, Var q_logits) {
  if (p_logits.shape() != q_logits.shape()) {
    throw ShapeError("kl_categorical: " + shape_string(p_logits.shape()) + " vs " + shape_string(q_logits.shape()));
  }
  const Var log_p = log_softmax(p_logits);
  const Var log_q = log_softmax(q_logits);
  const Var p = exp(log_p);
  const std::size_t class_axis = p_logits.shape().size() - 1;
  const Var per_row = sum_axis(p * (log_p - log_q), class_axis);
  return per_row.shape().empty() ? per_row : mean(per_row);
}

}  // namespace advt
