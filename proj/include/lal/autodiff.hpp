// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lal {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace ad {

/// Handle to a node on a Graph. Only meaningful for the graph that issued it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// A single-use reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node
/// list is a valid topological order for back-propagation. Gradients are
/// allocated lazily; a node whose inputs never require a gradient carries no
/// backward closure at all.
class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  Var input(Matrix value, bool requires_grad = false);
  /// Leaf that reads `ref` in place; `ref` must outlive the graph.
  Var external(const Matrix& ref, bool requires_grad = false);

  const Matrix& value(Var v) const { return value_of(v.id); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool has_grad(Var v) const { return nodes_[v.id].grad.size() > 0; }
  /// Gradient of the seeded objective w.r.t. v; zeros when nothing flowed.
  Matrix grad(Var v) const;

  /// Adds g to the gradient of v. Call before backward().
  void seed(Var v, const Matrix& g);
  void backward();

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var push(Matrix value, std::span<const Var> inputs, Backward fn);
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }
  Matrix& grad_ref(int id);
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }
  const Matrix& value_of(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad_of(int id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Graph& g, Var a, Var b);     // a * b
Var matmul_nt(Graph& g, Var a, Var b);  // a * b^T
Var add(Graph& g, Var a, Var b);
Var add_row(Graph& g, Var a, Var row);  // row (1 x n) broadcast over rows of a
Var add_constant(Graph& g, Var a, const Matrix& c);
Var scale(Graph& g, Var a, double s);
Var silu(Graph& g, Var a);
Var softmax_rows(Graph& g, Var a);
Var log_softmax_rows(Graph& g, Var a);
Var layer_norm_rows(Graph& g, Var x, Var gain, Var bias, double eps = 1e-5);
Var slice_cols(Graph& g, Var a, int begin, int count);
Var slice_rows(Graph& g, Var a, int begin, int count);
Var concat_cols(Graph& g, std::span<const Var> parts);
/// Strided mean over non-overlapping windows of `factor` rows; trailing rows
/// that do not fill a window are dropped.
Var mean_pool_rows(Graph& g, Var a, int factor);
Var gather_rows(Graph& g, Var table, std::span<const int> ids);
/// x * w^T + b, the usual affine map with weights stored out x in.
Var linear(Graph& g, Var x, Var w, Var b);

}  // namespace ad
}  // namespace lal
