#pragma once

// Tape-based reverse-mode differentiation over Tensor, restricted to the
// operations the recurrent network needs.

#include "occtrack/ops.hpp"
#include "occtrack/parameters.hpp"

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace occtrack {

template <typename Scalar>
class Graph;

/// Handle to a node recorded on a Graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const {
    if (!graph_) throw std::logic_error("use of an unbound Var");
    return *graph_;
  }
  int id() const { return id_; }
  const Tensor<Scalar>& value() const { return graph().value(id_); }
  const Tensor<Scalar>& grad() const { return graph().grad(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), {}, {}, false, {}); }

  /// Leaf bound to a stored parameter; its gradient is collected by accumulate_into().
  Var<Scalar> parameter(const ParameterStore<Scalar>& store, const std::string& name) {
    return push(store.at(name).value(), {}, {}, true, name);
  }

  /// Appends an operation node. The backward rule is kept only when some input needs a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::vector<int> inputs, BackwardFn backward) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_.at(static_cast<std::size_t>(i)).requires_grad;
    if (!needs) backward = nullptr;
    return push(std::move(value), std::move(inputs), std::move(backward), needs, {});
  }

  const Tensor<Scalar>& value(int id) const { return node(id).value; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor<Scalar>& grad(int id) {
    auto& n = node(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<Scalar>(n.value.shape());
    return n.grad;
  }
  const Tensor<Scalar>& grad(int id) const { return node(id).grad; }

  bool requires_grad(int id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Gradients of parameters reused across
  /// several nodes (e.g. every time step) are summed.
  void backward(const Var<Scalar>& loss) {
    if (nodes_.empty() || loss.id() < 0 || &loss.graph() != this)
      throw std::logic_error("backward called before any forward computation on this graph");
    if (value(loss.id()).size() != 1)
      throw ShapeError("backward: loss must be scalar, got " + to_string(value(loss.id()).shape()));
    for (auto& n : nodes_) n.grad = Tensor<Scalar>();
    grad(loss.id()).array().setConstant(Scalar(1));
    for (int id = loss.id(); id >= 0; --id) {
      auto& n = nodes_[static_cast<std::size_t>(id)];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id)
      if (!nodes_[id].parameter.empty()) grad(static_cast<int>(id));
    backward_done_ = true;
  }

  /// Adds parameter-leaf gradients into the store's gradient buffers.
  void accumulate_into(ParameterStore<Scalar>& store) const {
    if (!backward_done_) throw std::logic_error("accumulate_into called before backward");
    for (const auto& n : nodes_)
      if (!n.parameter.empty() && !n.grad.empty()) store.at(n.parameter).grads() += n.grad.array();
  }

  const std::vector<int>& inputs(int id) const { return node(id).inputs; }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string parameter;
  };

  Var<Scalar> push(Tensor<Scalar> value, std::vector<int> inputs, BackwardFn backward, bool requires_grad,
                   std::string parameter) {
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(backward), requires_grad,
                          std::move(parameter)});
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Node& node(int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw std::out_of_range("invalid graph node id");
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw std::out_of_range("invalid graph node id");
    return nodes_[static_cast<std::size_t>(id)];
  }

  // deque keeps node references stable while new nodes are appended.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

namespace detail {

template <typename Scalar>
Graph<Scalar>& common_graph(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.graph() != &b.graph()) throw std::logic_error("operands belong to different graphs");
  return a.graph();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable operations

namespace detail {

template <typename Scalar>
void conv_backward(Graph<Scalar>& g, int self, int dilation) {
  const auto& in = g.inputs(self);
  const int in_id = in[0], k_id = in[1];
  const auto& x = g.value(in_id);
  const auto& k = g.value(k_id);
  const auto& dout = g.grad(self);
  const int cout = k.dim(0), cin = k.dim(1);
  if (g.requires_grad(k_id)) {
    const auto cols = im2col(x, dilation);
    Eigen::Map<RowMatrix<Scalar>> dk(g.grad(k_id).data(), cout, static_cast<Eigen::Index>(cin) * 9);
    dk.noalias() += dout.matrix() * cols.transpose();
  }
  if (g.requires_grad(in_id)) {
    Eigen::Map<const RowMatrix<Scalar>> w(k.data(), cout, static_cast<Eigen::Index>(cin) * 9);
    const RowMatrix<Scalar> dcols = w.transpose() * dout.matrix();
    col2im_add(dcols, dilation, g.grad(in_id));
  }
  if (in.size() > 2 && g.requires_grad(in[2])) {
    auto& db = g.grad(in[2]);
    if (db.rank() == 1)
      db.array() += dout.matrix().rowwise().sum().array();
    else
      db.array() += dout.array();
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> conv2d_dilated(const Var<Scalar>& input, const Var<Scalar>& kernel, int dilation) {
  auto& g = detail::common_graph(input, kernel);
  auto out = conv2d_dilated(input.value(), kernel.value(), dilation);
  return g.record(std::move(out), {input.id(), kernel.id()},
                  [dilation](Graph<Scalar>& g, int self) { detail::conv_backward(g, self, dilation); });
}

template <typename Scalar>
Var<Scalar> conv2d_dilated(const Var<Scalar>& input, const Var<Scalar>& kernel, int dilation,
                           const Var<Scalar>& bias) {
  auto& g = detail::common_graph(input, kernel);
  detail::common_graph(input, bias);
  auto out = conv2d_dilated(input.value(), kernel.value(), dilation, bias.value());
  return g.record(std::move(out), {input.id(), kernel.id(), bias.id()},
                  [dilation](Graph<Scalar>& g, int self) { detail::conv_backward(g, self, dilation); });
}

template <typename Scalar>
Var<Scalar> pointwise_conv(const Var<Scalar>& input, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  auto& g = detail::common_graph(input, weight);
  detail::common_graph(input, bias);
  auto out = pointwise_conv(input.value(), weight.value(), bias.value());
  return g.record(std::move(out), {input.id(), weight.id(), bias.id()}, [](Graph<Scalar>& g, int self) {
    const auto& in = g.inputs(self);
    const auto& dout = g.grad(self);
    if (g.requires_grad(in[1])) g.grad(in[1]).matrix().noalias() += dout.matrix() * g.value(in[0]).matrix().transpose();
    if (g.requires_grad(in[0])) g.grad(in[0]).matrix().noalias() += g.value(in[1]).matrix().transpose() * dout.matrix();
    if (g.requires_grad(in[2])) g.grad(in[2]).array() += dout.matrix().rowwise().sum().array();
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  auto& g = a.graph();
  return g.record(sigmoid(a.value()), {a.id()}, [](Graph<Scalar>& g, int self) {
    const auto& y = g.value(self).array();
    g.grad(g.inputs(self)[0]).array() += g.grad(self).array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
Var<Scalar> tanh_act(const Var<Scalar>& a) {
  auto& g = a.graph();
  return g.record(tanh_act(a.value()), {a.id()}, [](Graph<Scalar>& g, int self) {
    const auto& y = g.value(self).array();
    g.grad(g.inputs(self)[0]).array() += g.grad(self).array() * (Scalar(1) - y.square());
  });
}

template <typename Scalar>
Var<Scalar> one_minus(const Var<Scalar>& a) {
  auto& g = a.graph();
  return g.record(one_minus(a.value()), {a.id()}, [](Graph<Scalar>& g, int self) {
    g.grad(g.inputs(self)[0]).array() -= g.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> elem_add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& g = detail::common_graph(a, b);
  return g.record(elem_add(a.value(), b.value()), {a.id(), b.id()}, [](Graph<Scalar>& g, int self) {
    for (int i : g.inputs(self))
      if (g.requires_grad(i)) g.grad(i).array() += g.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> elem_mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& g = detail::common_graph(a, b);
  return g.record(elem_mul(a.value(), b.value()), {a.id(), b.id()}, [](Graph<Scalar>& g, int self) {
    const int ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const auto& dout = g.grad(self).array();
    if (g.requires_grad(ia)) g.grad(ia).array() += dout * g.value(ib).array();
    if (g.requires_grad(ib)) g.grad(ib).array() += dout * g.value(ia).array();
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return elem_add(a, b);
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return elem_mul(a, b);
}

template <typename Scalar>
Var<Scalar> softmax_per_cell(const Var<Scalar>& logits) {
  auto& g = logits.graph();
  return g.record(softmax_per_cell(logits.value()), {logits.id()}, [](Graph<Scalar>& g, int self) {
    const auto p = g.value(self).matrix();
    const auto dout = g.grad(self).matrix();
    // d logits = p * (dout - sum_k p_k dout_k), per cell
    const auto dot = (p.array() * dout.array()).colwise().sum().eval();
    g.grad(g.inputs(self)[0]).matrix().array() += p.array() * (dout.array().rowwise() - dot);
  });
}

/// Differentiable masked binary cross-entropy; gradients are exactly zero where mask == 0.
template <typename Scalar>
Var<Scalar> masked_bce_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target, const Tensor<Scalar>& mask) {
  auto& g = pred.graph();
  const Scalar loss = masked_bce_loss(pred.value(), target, mask);
  return g.record(Tensor<Scalar>::scalar(loss), {pred.id()}, [target, mask](Graph<Scalar>& g, int self) {
    const Eigen::Index active = detail::active_count(mask);
    if (active == 0) return;
    const Scalar lo = detail::kProbClamp<Scalar>;
    const int pid = g.inputs(self)[0];
    const auto& p = g.value(pid).array();
    const auto& t = target.array();
    const Scalar scale = g.grad(self).item() / static_cast<Scalar>(active);
    // Inside the clamp: d/dp of -(t ln p + (1-t) ln(1-p)); outside it the clamp is flat.
    const auto inside = (p > lo) && (p < Scalar(1) - lo);
    const auto dp = (Scalar(1) - t) / (Scalar(1) - p) - t / p;
    const auto use = inside && (mask.array() != Scalar(0));
    g.grad(pid).array() += use.select(scale * dp, Scalar(0));
  });
}

/// Differentiable class-weighted NLL over labeled cells of a per-cell simplex.
template <typename Scalar>
Var<Scalar> weighted_masked_nll(const Var<Scalar>& pred, const ByteGrid& labels, const std::vector<Scalar>& weights) {
  auto& g = pred.graph();
  const Scalar loss = weighted_masked_nll(pred.value(), labels, weights);
  return g.record(Tensor<Scalar>::scalar(loss), {pred.id()}, [labels, weights](Graph<Scalar>& g, int self) {
    const int pid = g.inputs(self)[0];
    const auto& p = g.value(pid);
    const Eigen::Index cells = labels.size();
    Scalar norm = 0;
    for (Eigen::Index i = 0; i < cells; ++i)
      if (labels.data()[i] != kIgnoreLabel) norm += weights[labels.data()[i]];
    if (norm <= 0) return;
    const Scalar scale = g.grad(self).item() / norm;
    auto& dp = g.grad(pid);
    for (Eigen::Index i = 0; i < cells; ++i) {
      const auto label = labels.data()[i];
      if (label == kIgnoreLabel) continue;
      const Eigen::Index j = label * cells + i;
      if (p[j] > detail::kProbClamp<Scalar>) dp[j] -= scale * weights[label] / p[j];
    }
  });
}

/// Sum of squared entries, as a scalar node.
template <typename Scalar>
Var<Scalar> sum_squares(const Var<Scalar>& a) {
  auto& g = a.graph();
  return g.record(Tensor<Scalar>::scalar(a.value().array().square().sum()), {a.id()}, [](Graph<Scalar>& g, int self) {
    const int i = g.inputs(self)[0];
    g.grad(i).array() += Scalar(2) * g.grad(self).item() * g.value(i).array();
  });
}

/// Weighted sum of scalar nodes: sum_i coeff * terms[i].
template <typename Scalar>
Var<Scalar> scaled_sum(const std::vector<Var<Scalar>>& terms, Scalar coeff) {
  if (terms.empty()) throw std::invalid_argument("scaled_sum of no terms");
  auto& g = terms.front().graph();
  Scalar total = 0;
  std::vector<int> ids;
  for (const auto& t : terms) {
    detail::common_graph(terms.front(), t);
    total += t.value().item();
    ids.push_back(t.id());
  }
  return g.record(Tensor<Scalar>::scalar(coeff * total), std::move(ids), [coeff](Graph<Scalar>& g, int self) {
    const Scalar d = coeff * g.grad(self).item();
    for (int i : g.inputs(self))
      if (g.requires_grad(i)) g.grad(i).array() += d;
  });
}

}  // namespace occtrack
