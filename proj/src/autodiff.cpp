// Copyright 2026 The lalcs Authors
// SPDX-License-Identifier: Apache-2.0

#include "lal/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lal::ad {

Var Graph::input(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::external(const Matrix& ref, bool requires_grad) {
  Node n;
  n.external = &ref;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() > 0) return n.grad;
  const Matrix& val = value_of(v.id);
  return Matrix::Zero(val.rows(), val.cols());
}

Matrix& Graph::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& val = value_of(id);
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::seed(Var v, const Matrix& g) {
  if (g.rows() != value(v).rows() || g.cols() != value(v).cols())
    throw std::invalid_argument("seed gradient shape mismatch");
  grad_ref(v.id) += g;
}

Var Graph::push(Matrix value, std::span<const Var> inputs, Backward fn) {
  bool rg = false;
  for (Var in : inputs) rg = rg || nodes_[in.id].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward() {
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() > 0) n.backward(*this, i);
  }
}

namespace {

void accumulate(Graph& g, Var target, const auto& delta) {
  if (g.requires_grad(target)) g.grad_ref(target.id) += delta;
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  if (g.value(a).cols() != g.value(b).rows()) throw std::invalid_argument("matmul: inner dims differ");
  Matrix out = g.value(a) * g.value(b);
  return g.push(std::move(out), {a, b}, [a, b](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    if (gr.requires_grad(a)) gr.grad_ref(a.id).noalias() += go * gr.value(b).transpose();
    if (gr.requires_grad(b)) gr.grad_ref(b.id).noalias() += gr.value(a).transpose() * go;
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  if (g.value(a).cols() != g.value(b).cols()) throw std::invalid_argument("matmul_nt: inner dims differ");
  Matrix out = g.value(a) * g.value(b).transpose();
  return g.push(std::move(out), {a, b}, [a, b](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    if (gr.requires_grad(a)) gr.grad_ref(a.id).noalias() += go * gr.value(b);
    if (gr.requires_grad(b)) gr.grad_ref(b.id).noalias() += go.transpose() * gr.value(a);
  });
}

Var add(Graph& g, Var a, Var b) {
  if (g.value(a).rows() != g.value(b).rows() || g.value(a).cols() != g.value(b).cols())
    throw std::invalid_argument("add: shape mismatch");
  Matrix out = g.value(a) + g.value(b);
  return g.push(std::move(out), {a, b}, [a, b](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    accumulate(gr, a, go);
    accumulate(gr, b, go);
  });
}

Var add_row(Graph& g, Var a, Var row) {
  if (g.value(row).rows() != 1 || g.value(row).cols() != g.value(a).cols())
    throw std::invalid_argument("add_row: row shape mismatch");
  Matrix out = g.value(a).rowwise() + g.value(row).row(0);
  return g.push(std::move(out), {a, row}, [a, row](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    accumulate(gr, a, go);
    if (gr.requires_grad(row)) gr.grad_ref(row.id) += go.colwise().sum();
  });
}

Var add_constant(Graph& g, Var a, const Matrix& c) {
  if (g.value(a).rows() != c.rows() || g.value(a).cols() != c.cols())
    throw std::invalid_argument("add_constant: shape mismatch");
  Matrix out = g.value(a) + c;
  return g.push(std::move(out), {a}, [a](Graph& gr, int self) { accumulate(gr, a, gr.grad_of(self)); });
}

Var scale(Graph& g, Var a, double s) {
  Matrix out = g.value(a) * s;
  return g.push(std::move(out), {a}, [a, s](Graph& gr, int self) { accumulate(gr, a, gr.grad_of(self) * s); });
}

Var silu(Graph& g, Var a) {
  const Matrix& x = g.value(a);
  Matrix out = x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
  return g.push(std::move(out), {a}, [a](Graph& gr, int self) {
    const Matrix& x = gr.value(a);
    Matrix d = x.unaryExpr([](double v) {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 + v * (1.0 - s));
    });
    accumulate(gr, a, gr.grad_of(self).cwiseProduct(d));
  });
}

Var softmax_rows(Graph& g, Var a) {
  const Matrix& x = g.value(a);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return g.push(std::move(out), {a}, [a](Graph& gr, int self) {
    const Matrix& p = gr.value_of(self);
    const Matrix& go = gr.grad_of(self);
    Matrix d(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double dot = go.row(r).dot(p.row(r));
      d.row(r) = p.row(r).array() * (go.row(r).array() - dot);
    }
    accumulate(gr, a, d);
  });
}

Var log_softmax_rows(Graph& g, Var a) {
  const Matrix& x = g.value(a);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return g.push(std::move(out), {a}, [a](Graph& gr, int self) {
    const Matrix& lp = gr.value_of(self);
    const Matrix& go = gr.grad_of(self);
    Matrix d(lp.rows(), lp.cols());
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
      const double total = go.row(r).sum();
      d.row(r) = go.row(r).array() - lp.row(r).array().exp() * total;
    }
    accumulate(gr, a, d);
  });
}

Var layer_norm_rows(Graph& g, Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = g.value(x);
  const Eigen::Index n = xv.cols();
  if (g.value(gain).cols() != n || g.value(bias).cols() != n)
    throw std::invalid_argument("layer_norm: parameter width mismatch");
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * g.value(gain).row(0).array()).matrix();
  out.rowwise() += g.value(bias).row(0);
  return g.push(std::move(out), {x, gain, bias},
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& gr, int self) {
                  const Matrix& go = gr.grad_of(self);
                  if (gr.requires_grad(gain))
                    gr.grad_ref(gain.id) += go.cwiseProduct(xhat).colwise().sum();
                  if (gr.requires_grad(bias)) gr.grad_ref(bias.id) += go.colwise().sum();
                  if (!gr.requires_grad(x)) return;
                  const double n = static_cast<double>(xhat.cols());
                  Matrix gx = (go.array().rowwise() * gr.value(gain).row(0).array()).matrix();
                  Matrix dx(gx.rows(), gx.cols());
                  for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                    const double s1 = gx.row(r).sum();
                    const double s2 = gx.row(r).dot(xhat.row(r));
                    dx.row(r) = (inv_std(r) / n) * (n * gx.row(r).array() - s1 - xhat.row(r).array() * s2);
                  }
                  gr.grad_ref(x.id) += dx;
                });
}

Var slice_cols(Graph& g, Var a, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > g.value(a).cols())
    throw std::out_of_range("slice_cols out of range");
  Matrix out = g.value(a).middleCols(begin, count);
  return g.push(std::move(out), {a}, [a, begin, count](Graph& gr, int self) {
    if (gr.requires_grad(a)) gr.grad_ref(a.id).middleCols(begin, count) += gr.grad_of(self);
  });
}

Var slice_rows(Graph& g, Var a, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > g.value(a).rows())
    throw std::out_of_range("slice_rows out of range");
  Matrix out = g.value(a).middleRows(begin, count);
  return g.push(std::move(out), {a}, [a, begin, count](Graph& gr, int self) {
    if (gr.requires_grad(a)) gr.grad_ref(a.id).middleRows(begin, count) += gr.grad_of(self);
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const Eigen::Index rows = g.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (g.value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += g.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, g.value(p).cols()) = g.value(p);
    at += g.value(p).cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return g.push(std::move(out), parts, [ins = std::move(ins)](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    Eigen::Index at = 0;
    for (Var p : ins) {
      const Eigen::Index c = gr.value(p).cols();
      if (gr.requires_grad(p)) gr.grad_ref(p.id) += go.middleCols(at, c);
      at += c;
    }
  });
}

Var mean_pool_rows(Graph& g, Var a, int factor) {
  if (factor < 1) throw std::invalid_argument("mean_pool_rows: factor < 1");
  const Matrix& x = g.value(a);
  const Eigen::Index out_rows = x.rows() / factor;
  Matrix out(out_rows, x.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r)
    out.row(r) = x.middleRows(r * factor, factor).colwise().mean();
  return g.push(std::move(out), {a}, [a, factor](Graph& gr, int self) {
    if (!gr.requires_grad(a)) return;
    const Matrix& go = gr.grad_of(self);
    Matrix& ga = gr.grad_ref(a.id);
    const double inv = 1.0 / factor;
    for (Eigen::Index r = 0; r < go.rows(); ++r)
      for (int k = 0; k < factor; ++k) ga.row(r * factor + k) += go.row(r) * inv;
  });
}

Var gather_rows(Graph& g, Var table, std::span<const int> ids) {
  const Matrix& t = g.value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) throw std::out_of_range("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return g.push(std::move(out), {table}, [table, idv = std::move(idv)](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    Matrix& gt = gr.grad_ref(table.id);
    for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += go.row(static_cast<Eigen::Index>(i));
  });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(w);
  if (xv.cols() != wv.cols()) throw std::invalid_argument("linear: input width mismatch");
  if (g.value(b).rows() != 1 || g.value(b).cols() != wv.rows())
    throw std::invalid_argument("linear: bias shape mismatch");
  Matrix out = xv * wv.transpose();
  out.rowwise() += g.value(b).row(0);
  return g.push(std::move(out), {x, w, b}, [x, w, b](Graph& gr, int self) {
    const Matrix& go = gr.grad_of(self);
    if (gr.requires_grad(x)) gr.grad_ref(x.id).noalias() += go * gr.value(w);
    if (gr.requires_grad(w)) gr.grad_ref(w.id).noalias() += go.transpose() * gr.value(x);
    if (gr.requires_grad(b)) gr.grad_ref(b.id) += go.colwise().sum();
  });
}

}  // namespace lal::ad
