// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "nparts/parameter_store.hpp"

namespace nparts::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class Op {
  kConstant,
  kVariable,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kAddRow,
  kMatmul,
  kTranspose,
  kExp,
  kSigmoid,
  kSoftplus,
  kRelu,
  kHardtanh,
  kSqrt,
  kRowNorm,
  kClampMin,
  kHinge,
  kRowSum,
  kRowMin,
  kSum,
  kMean,
  kColumn,
  kHcat,
  kVcat,
  kSliceRows,
  kGatherRows,
  kPairwiseSqDist,
};

const char* op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Define-by-run tape. Every op computes its value eagerly when the node is
/// created; a value that is not finite aborts construction with a
/// NumericError naming the op. Nodes are appended in topological order, so
/// backward is a single reverse sweep.
class Graph {
 public:
  /// `params` may be null for graphs with no trainable leaves.
  explicit Graph(const ParameterStore* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  /// Differentiable leaf that is not a named parameter; read its gradient
  /// with adjoint() after backward().
  Var variable(Matrix value);
  /// Leaf bound to a ParameterStore entry; one node per name per graph.
  Var parameter(const std::string& name);

  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  Op op(Var v) const { return nodes_[v.id_].op; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Root value. Values are computed at construction, so this is a lookup.
  const Matrix& evaluate(Var root) const { return value(root); }

  /// Reverse sweep from a 1x1 root. Returns gradients laid out like the
  /// parameter store; parameters the root does not depend on are zero.
  ParameterStore backward(Var root);

  /// Adjoint of any node after backward(); zero matrix if none reached it.
  Matrix adjoint(Var v) const;

  // Op constructors are free functions below; they use this to append.
  struct Node {
    Op op;
    Matrix value;
    std::vector<int> inputs;
    bool needs_grad = false;
    double a = 0.0;
    double b = 0.0;
    std::vector<Index> indices;  // argmin columns, gathered rows, ...
    std::size_t param = 0;
  };
  Var push(Node node);
  const Node& node(Var v) const { return nodes_[v.id_]; }

 private:
  void backprop_node(std::size_t i, ParameterStore& grads);
  template <class E>
  void accumulate(int target, const E& grad);

  const ParameterStore* params_;
  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
  std::unordered_map<std::string, int> param_nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// Elementwise quotient.
Var div(Var a, Var b);
Var scale(Var a, double c);
Var neg(Var a);
Var add_scalar(Var a, double c);
/// a (N x k) plus a 1 x k row broadcast over every row.
Var add_row(Var a, Var row);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var sigmoid(Var a);
/// log(1 + e^x), computed without overflow.
Var softplus(Var a);
Var relu(Var a);
/// Clamp to [lo, hi]; gradient is 1 strictly inside, 0 at or beyond a bound.
Var hardtanh(Var a, double lo, double hi);
Var sqrt(Var a);
/// Per-row Euclidean norm, N x k -> N x 1. Gradient at a zero row is zero.
Var row_norm(Var a);
/// max(a, c) elementwise.
Var clamp_min(Var a, double c);
/// max(0, a - c) elementwise.
Var hinge(Var a, double c);
/// N x k -> N x 1.
Var row_sum(Var a);
/// N x k -> N x 1; gradient routes to the first minimizing column.
Var row_min(Var a);
/// Sum of all entries -> 1 x 1.
Var sum(Var a);
Var mean(Var a);
Var column(Var a, Index j);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
Var slice_rows(Var a, Index start, Index count);
Var gather_rows(Var a, std::span<const Index> rows);
/// ||a_i - b_j||^2 for every row pair: N x d, K x d -> N x K.
Var pairwise_sqdist(Var a, Var b);

/// Argmin column per row recorded by a row_min node.
const std::vector<Index>& argmin_columns(Var row_min_node);

/// Value and analytic gradient of a scalar function of a flat vector.
using GradFunction =
    std::function<double(const Eigen::VectorXd& point, Eigen::VectorXd* grad)>;

/// Max over coordinates of |analytic - central difference| /
/// max(1, |central difference|), with step h.
double grad_check(const GradFunction& f, const Eigen::VectorXd& point, double h);

}  // namespace nparts::ad
