// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/diffgraph.hpp"

#include <cmath>
#include <limits>

#include "nparts/errors.hpp"

namespace nparts::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a.value()) +
                     " vs " + shape_str(b.value()));
  }
}

void require_same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw UsageError("operands belong to different graphs");
}

Graph::Node make_node(Op op, std::initializer_list<Var> in) {
  Graph::Node n;
  n.op = op;
  for (Var v : in) {
    n.inputs.push_back(v.id());
    n.needs_grad = n.needs_grad || v.graph().node(v).needs_grad;
  }
  return n;
}

Var unary(Op op, Var a, Matrix value, double p0 = 0.0, double p1 = 0.0) {
  Graph::Node n = make_node(op, {a});
  n.value = std::move(value);
  n.a = p0;
  n.b = p1;
  return a.graph().push(std::move(n));
}

Var binary(Op op, Var a, Var b, Matrix value) {
  require_same_graph(a, b);
  Graph::Node n = make_node(op, {a, b});
  n.value = std::move(value);
  return a.graph().push(std::move(n));
}

double softplus_scalar(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kVariable: return "variable";
    case Op::kParameter: return "parameter";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kAddRow: return "add_row";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kExp: return "exp";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftplus: return "softplus";
    case Op::kRelu: return "relu";
    case Op::kHardtanh: return "hardtanh";
    case Op::kSqrt: return "sqrt";
    case Op::kRowNorm: return "row_norm";
    case Op::kClampMin: return "clamp_min";
    case Op::kHinge: return "hinge";
    case Op::kRowSum: return "row_sum";
    case Op::kRowMin: return "row_min";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kColumn: return "column";
    case Op::kHcat: return "hcat";
    case Op::kVcat: return "vcat";
    case Op::kSliceRows: return "slice_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kPairwiseSqDist: return "pairwise_sqdist";
  }
  return "unknown";
}

const Matrix& Var::value() const { return graph_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw UsageError("scalar() on a " + shape_str(v) + " node");
  return v(0, 0);
}

Var Graph::push(Node node) {
  if (!node.value.allFinite()) {
    throw NumericError(std::string("numeric overflow in op '") + op_name(node.op) + "'");
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::constant(Matrix value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Graph::variable(Matrix value) {
  Node n;
  n.op = Op::kVariable;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::parameter(const std::string& name) {
  if (params_ == nullptr) throw UsageError("graph has no parameter store bound");
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = Op::kParameter;
  n.param = params_->index_of(name);
  n.value = params_->matrix(n.param);
  n.needs_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(name, v.id_);
  return v;
}

Matrix Graph::adjoint(Var v) const {
  const auto i = static_cast<std::size_t>(v.id_);
  if (i < adjoints_.size() && adjoints_[i].size() != 0) return adjoints_[i];
  return Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
}

template <class E>
void Graph::accumulate(int target, const E& grad) {
  if (!nodes_[target].needs_grad) return;
  Matrix& adj = adjoints_[target];
  if (adj.size() == 0) {
    adj = grad;
  } else {
    adj += grad;
  }
}

ParameterStore Graph::backward(Var root) {
  const Matrix& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw UsageError("backward requires a scalar root, got " + shape_str(rv));
  }
  ParameterStore grads = params_ ? params_->zeros_like() : ParameterStore{};
  adjoints_.assign(nodes_.size(), Matrix());
  if (!nodes_[root.id_].needs_grad) return grads;
  adjoints_[root.id_] = Matrix::Ones(1, 1);
  for (std::size_t i = static_cast<std::size_t>(root.id_) + 1; i-- > 0;) {
    if (!nodes_[i].needs_grad || adjoints_[i].size() == 0) continue;
    backprop_node(i, grads);
  }
  return grads;
}

void Graph::backprop_node(std::size_t i, ParameterStore& grads) {
  const Node& n = nodes_[i];
  const Matrix& g = adjoints_[i];
  if (!g.allFinite()) {
    throw NumericError(std::string("numeric overflow in backward of op '") + op_name(n.op) + "'");
  }
  auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
  auto needs = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  switch (n.op) {
    case Op::kConstant:
    case Op::kVariable:
      break;
    case Op::kParameter: {
      using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      Eigen::VectorXd& out = grads.data(n.param);
      Eigen::Map<RowMajor>(out.data(), g.rows(), g.cols()) += g;
      break;
    }
    case Op::kAdd:
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], g);
      break;
    case Op::kSub:
      accumulate(n.inputs[0], g);
      if (needs(1)) accumulate(n.inputs[1], -g);
      break;
    case Op::kMul:
      if (needs(0)) accumulate(n.inputs[0], g.cwiseProduct(in(1)));
      if (needs(1)) accumulate(n.inputs[1], g.cwiseProduct(in(0)));
      break;
    case Op::kDiv:
      if (needs(0)) accumulate(n.inputs[0], g.cwiseQuotient(in(1)));
      if (needs(1)) {
        accumulate(n.inputs[1],
                   (-g.cwiseProduct(in(0)).cwiseQuotient(in(1).cwiseAbs2())).eval());
      }
      break;
    case Op::kScale:
      accumulate(n.inputs[0], n.a * g);
      break;
    case Op::kAddScalar:
      accumulate(n.inputs[0], g);
      break;
    case Op::kAddRow:
      accumulate(n.inputs[0], g);
      if (needs(1)) accumulate(n.inputs[1], g.colwise().sum());
      break;
    case Op::kMatmul:
      if (needs(0)) accumulate(n.inputs[0], (g * in(1).transpose()).eval());
      if (needs(1)) accumulate(n.inputs[1], (in(0).transpose() * g).eval());
      break;
    case Op::kTranspose:
      accumulate(n.inputs[0], g.transpose());
      break;
    case Op::kExp:
      accumulate(n.inputs[0], g.cwiseProduct(n.value));
      break;
    case Op::kSigmoid:
      accumulate(n.inputs[0],
                 g.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix())));
      break;
    case Op::kSoftplus:
      accumulate(n.inputs[0], g.cwiseProduct(in(0).unaryExpr(&sigmoid_scalar)));
      break;
    case Op::kRelu:
      accumulate(n.inputs[0],
                 (in(0).array() > 0.0).select(g.array(), 0.0).matrix());
      break;
    case Op::kHardtanh:
      accumulate(n.inputs[0],
                 ((in(0).array() > n.a) && (in(0).array() < n.b)).select(g.array(), 0.0).matrix());
      break;
    case Op::kSqrt:
      accumulate(n.inputs[0], (0.5 * g.array() / n.value.array()).matrix());
      break;
    case Op::kRowNorm: {
      const Matrix& x = in(0);
      Matrix d(x.rows(), x.cols());
      for (Index r = 0; r < x.rows(); ++r) {
        const double norm = n.value(r, 0);
        if (norm > 0.0) {
          d.row(r) = (g(r, 0) / norm) * x.row(r);
        } else {
          d.row(r).setZero();
        }
      }
      accumulate(n.inputs[0], d);
      break;
    }
    case Op::kClampMin:
    case Op::kHinge:
      accumulate(n.inputs[0], (in(0).array() > n.a).select(g.array(), 0.0).matrix());
      break;
    case Op::kRowSum:
      accumulate(n.inputs[0], g.replicate(1, in(0).cols()));
      break;
    case Op::kRowMin: {
      Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
      for (Index r = 0; r < d.rows(); ++r) d(r, n.indices[r]) = g(r, 0);
      accumulate(n.inputs[0], d);
      break;
    }
    case Op::kSum:
      accumulate(n.inputs[0], Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
      break;
    case Op::kMean: {
      const double s = g(0, 0) / static_cast<double>(in(0).size());
      accumulate(n.inputs[0], Matrix::Constant(in(0).rows(), in(0).cols(), s));
      break;
    }
    case Op::kColumn: {
      Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
      d.col(n.indices[0]) = g.col(0);
      accumulate(n.inputs[0], d);
      break;
    }
    case Op::kHcat: {
      Index c = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Index w = in(k).cols();
        if (needs(k)) accumulate(n.inputs[k], g.middleCols(c, w));
        c += w;
      }
      break;
    }
    case Op::kVcat: {
      Index r = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Index h = in(k).rows();
        if (needs(k)) accumulate(n.inputs[k], g.middleRows(r, h));
        r += h;
      }
      break;
    }
    case Op::kSliceRows: {
      Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
      d.middleRows(n.indices[0], g.rows()) = g;
      accumulate(n.inputs[0], d);
      break;
    }
    case Op::kGatherRows: {
      Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
      for (std::size_t k = 0; k < n.indices.size(); ++k) d.row(n.indices[k]) += g.row(k);
      accumulate(n.inputs[0], d);
      break;
    }
    case Op::kPairwiseSqDist: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (needs(0)) {
        Matrix da = 2.0 * (g.rowwise().sum().asDiagonal() * a - g * b);
        accumulate(n.inputs[0], da);
      }
      if (needs(1)) {
        Matrix db = 2.0 * (g.colwise().sum().transpose().asDiagonal() * b - g.transpose() * a);
        accumulate(n.inputs[1], db);
      }
      break;
    }
  }
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return binary(Op::kAdd, a, b, a.value() + b.value());
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return binary(Op::kSub, a, b, a.value() - b.value());
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  return binary(Op::kMul, a, b, a.value().cwiseProduct(b.value()));
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  return binary(Op::kDiv, a, b, a.value().cwiseQuotient(b.value()));
}

Var scale(Var a, double c) { return unary(Op::kScale, a, c * a.value(), c); }

Var neg(Var a) { return scale(a, -1.0); }

Var add_scalar(Var a, double c) {
  return unary(Op::kAddScalar, a, (a.value().array() + c).matrix(), c);
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw UsageError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                     shape_str(row.value()));
  }
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return binary(Op::kAddRow, a, row, std::move(v));
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw UsageError("matmul: shape mismatch " + shape_str(a.value()) + " * " +
                     shape_str(b.value()));
  }
  Matrix v = a.value() * b.value();
  return binary(Op::kMatmul, a, b, std::move(v));
}

Var transpose(Var a) { return unary(Op::kTranspose, a, a.value().transpose()); }

Var exp(Var a) { return unary(Op::kExp, a, a.value().array().exp().matrix()); }

Var sigmoid(Var a) { return unary(Op::kSigmoid, a, a.value().unaryExpr(&sigmoid_scalar)); }

Var softplus(Var a) { return unary(Op::kSoftplus, a, a.value().unaryExpr(&softplus_scalar)); }

Var relu(Var a) { return unary(Op::kRelu, a, a.value().cwiseMax(0.0)); }

Var hardtanh(Var a, double lo, double hi) {
  if (!(lo < hi)) throw UsageError("hardtanh: lo must be below hi");
  return unary(Op::kHardtanh, a, a.value().cwiseMax(lo).cwiseMin(hi), lo, hi);
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) throw NumericError("numeric overflow in op 'sqrt'");
  return unary(Op::kSqrt, a, a.value().cwiseSqrt());
}

Var row_norm(Var a) { return unary(Op::kRowNorm, a, a.value().rowwise().norm()); }

Var clamp_min(Var a, double c) { return unary(Op::kClampMin, a, a.value().cwiseMax(c), c); }

Var hinge(Var a, double c) {
  return unary(Op::kHinge, a, (a.value().array() - c).cwiseMax(0.0).matrix(), c);
}

Var row_sum(Var a) { return unary(Op::kRowSum, a, a.value().rowwise().sum()); }

Var row_min(Var a) {
  const Matrix& x = a.value();
  if (x.cols() == 0) throw UsageError("row_min over zero columns");
  Graph::Node n = make_node(Op::kRowMin, {a});
  n.value.resize(x.rows(), 1);
  n.indices.resize(static_cast<std::size_t>(x.rows()));
  for (Index r = 0; r < x.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < x.cols(); ++c) {
      if (x(r, c) < x(r, best)) best = c;
    }
    n.indices[r] = best;
    n.value(r, 0) = x(r, best);
  }
  return a.graph().push(std::move(n));
}

Var sum(Var a) { return unary(Op::kSum, a, Matrix::Constant(1, 1, a.value().sum())); }

Var mean(Var a) {
  if (a.value().size() == 0) throw UsageError("mean of an empty array");
  return unary(Op::kMean, a, Matrix::Constant(1, 1, a.value().mean()));
}

Var column(Var a, Index j) {
  if (j < 0 || j >= a.cols()) throw UsageError("column index out of range");
  Graph::Node n = make_node(Op::kColumn, {a});
  n.value = a.value().col(j);
  n.indices = {j};
  return a.graph().push(std::move(n));
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("hcat of nothing");
  Graph& g = parts[0].graph();
  const Index rows = parts[0].rows();
  Index cols = 0;
  Graph::Node n;
  n.op = Op::kHcat;
  for (Var p : parts) {
    if (&p.graph() != &g) throw UsageError("operands belong to different graphs");
    if (p.rows() != rows) throw UsageError("hcat: row count mismatch");
    cols += p.cols();
    n.inputs.push_back(p.id());
    n.needs_grad = n.needs_grad || g.node(p).needs_grad;
  }
  n.value.resize(rows, cols);
  Index c = 0;
  for (Var p : parts) {
    n.value.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return g.push(std::move(n));
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("vcat of nothing");
  Graph& g = parts[0].graph();
  const Index cols = parts[0].cols();
  Index rows = 0;
  Graph::Node n;
  n.op = Op::kVcat;
  for (Var p : parts) {
    if (&p.graph() != &g) throw UsageError("operands belong to different graphs");
    if (p.cols() != cols) throw UsageError("vcat: column count mismatch");
    rows += p.rows();
    n.inputs.push_back(p.id());
    n.needs_grad = n.needs_grad || g.node(p).needs_grad;
  }
  n.value.resize(rows, cols);
  Index r = 0;
  for (Var p : parts) {
    n.value.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.push(std::move(n));
}

Var slice_rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw UsageError("slice_rows out of range");
  }
  Graph::Node n = make_node(Op::kSliceRows, {a});
  n.value = a.value().middleRows(start, count);
  n.indices = {start};
  return a.graph().push(std::move(n));
}

Var gather_rows(Var a, std::span<const Index> rows) {
  Graph::Node n = make_node(Op::kGatherRows, {a});
  n.value.resize(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) throw UsageError("gather_rows index out of range");
    n.value.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  }
  n.indices.assign(rows.begin(), rows.end());
  return a.graph().push(std::move(n));
}

Var pairwise_sqdist(Var a, Var b) {
  if (a.cols() != b.cols()) throw UsageError("pairwise_sqdist: dimension mismatch");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix d(x.rows(), y.rows());
  // Direct differences rather than the |a|^2 + |b|^2 - 2ab expansion, so that
  // coincident points give exactly zero.
  for (Index j = 0; j < y.rows(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (Index k = 0; k < x.cols(); ++k) {
        const double t = x(i, k) - y(j, k);
        s += t * t;
      }
      d(i, j) = s;
    }
  }
  return binary(Op::kPairwiseSqDist, a, b, std::move(d));
}

const std::vector<Index>& argmin_columns(Var row_min_node) {
  const auto& n = row_min_node.graph().node(row_min_node);
  if (n.op != Op::kRowMin) throw UsageError("argmin_columns on a non row_min node");
  return n.indices;
}

double grad_check(const GradFunction& f, const Eigen::VectorXd& point, double h) {
  Eigen::VectorXd analytic(point.size());
  f(point, &analytic);
  double worst = 0.0;
  Eigen::VectorXd probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = f(probe, nullptr);
    probe[i] = point[i] - h;
    const double down = f(probe, nullptr);
    probe[i] = point[i];
    const double central = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace nparts::ad
