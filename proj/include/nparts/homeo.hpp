// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nparts/diffgraph.hpp"
#include "nparts/geometry.hpp"
#include "nparts/parameter_store.hpp"
#include "nparts/rng.hpp"

namespace nparts {

/// Architecture of the conditional homeomorphism.
struct HomeoConfig {
  int primitives = 1;
  int layers = 4;
  /// Hidden width of the s, t and p networks.
  int hidden = 256;
  /// Shape embedding size (2D).
  int embed_dim = 512;
  /// Output width of the point-lifting p network.
  int feature_dim = 128;
  double radius = 0.25;
  double scale_clamp = 10.0;

  void validate() const;
};

nlohmann::json to_json(const HomeoConfig& c);

/// Draws a transformed-dimension schedule: no two consecutive layers share a
/// dimension and, with three or more layers, every axis is transformed at
/// least once.
std::vector<int> draw_split_schedule(int layers, Rng& rng);

/// Stack of conditional affine coupling layers mapping sphere space to
/// primitive space, plus the sphere radius.
///
/// Layer l transforms coordinate `schedule[l]` of a point using the other two
/// coordinates and the primitive's embedding row:
///
///   f = p(pass)               2 -> hidden -> feature_dim
///   s = hardtanh(s([C; f]))   (embed + feature) -> hidden -> hidden -> 1
///   t = t([C; f])             same shape, no final activation
///   z' = z * exp(s) + t
///
/// All weights, and the M x embed_dim embedding table, live in a
/// ParameterStore owned by the caller. Every method is available on plain
/// matrices (evaluation) and on graph nodes (training).
class ConditionalHomeomorphism {
 public:
  ConditionalHomeomorphism(HomeoConfig config, std::vector<int> schedule);

  const HomeoConfig& config() const { return config_; }
  const std::vector<int>& schedule() const { return schedule_; }
  double radius() const { return config_.radius; }
  int primitives() const { return config_.primitives; }

  /// Adds every parameter to `store`. Hidden layers get
  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); the final s and t layers are
  /// zero so the map starts as the identity; embeddings are
  /// N(0, embed_init_std^2).
  void init_parameters(ParameterStore& store, Rng& rng, double embed_init_std = 1.0) const;
  /// Empty store with the expected names and shapes.
  ParameterStore parameter_layout() const;

  static std::string embedding_name() { return "embedding"; }
  static std::string param_name(int layer, const std::string& net, const std::string& field);

  // Plain evaluation; points are N x 3.
  Points coupling_forward(const ParameterStore& p, int layer, const Points& x, int m) const;
  Points coupling_inverse(const ParameterStore& p, int layer, const Points& x, int m) const;
  Points forward(const ParameterStore& p, const Points& y, int m) const;
  Points inverse(const ParameterStore& p, const Points& x, int m) const;
  /// ||phi^-1(x; C_m)|| - r, N x 1.
  Eigen::VectorXd implicit(const ParameterStore& p, const Points& x, int m) const;
  /// N x M matrix of g^m values.
  Eigen::MatrixXd implicit_all(const ParameterStore& p, const Points& x) const;

  // Differentiable evaluation.
  ad::Var coupling_forward(ad::Graph& g, int layer, ad::Var x, int m) const;
  ad::Var coupling_inverse(ad::Graph& g, int layer, ad::Var x, int m) const;
  ad::Var forward(ad::Graph& g, ad::Var y, int m) const;
  ad::Var inverse(ad::Graph& g, ad::Var x, int m) const;
  ad::Var implicit(ad::Graph& g, ad::Var x, int m) const;
  /// hcat of g^m over all primitives, N x M.
  ad::Var implicit_all(ad::Graph& g, ad::Var x) const;

 private:
  template <class Ops>
  typename Ops::T apply_layer(Ops& ops, int layer, const typename Ops::T& x, int m,
                              bool inverse) const;

  HomeoConfig config_;
  std::vector<int> schedule_;
};

/// G(x) = min_m g^m(x) with the lowest index winning ties.
struct UnionField {
  Eigen::VectorXd value;
  std::vector<Eigen::Index> argmin;
};

UnionField implicit_union(const ConditionalHomeomorphism& h, const ParameterStore& p,
                          const Points& x);
/// Differentiable union: N x 1, gradient to the argmin primitive only.
ad::Var implicit_union(const ConditionalHomeomorphism& h, ad::Graph& g, ad::Var x);

/// phi_forward of sphere samples; throws UsageError if a sample is off the
/// radius-r sphere by more than 1e-12 (relative to r).
Points surface_points(const ConditionalHomeomorphism& h, const ParameterStore& p,
                      const Points& sphere_samples, int m);

constexpr double kSurfaceEpsilon = 1e-6;

struct LabeledPoints {
  Points points = Points(0, 3);
  std::vector<int> primitive;
  /// Row of each kept point in the concatenated input.
  std::vector<Eigen::Index> source_row;
};

/// Keeps points x of the per-primitive sets with G(x) >= -eps, where eps
/// absorbs round-off on the point's own primitive.
LabeledPoints union_surface(const ConditionalHomeomorphism& h, const ParameterStore& p,
                            const std::vector<Points>& per_primitive,
                            double eps = kSurfaceEpsilon);

/// Rows of per-primitive point sets (given as one stacked matrix with
/// `counts[m]` rows per primitive) that survive the union filter.
std::vector<Eigen::Index> union_surface_rows(const ConditionalHomeomorphism& h,
                                             const ParameterStore& p, const Points& stacked,
                                             const std::vector<Eigen::Index>& counts,
                                             double eps = kSurfaceEpsilon);

/// Vertices mapped forward, faces unchanged.
TriMesh primitive_mesh(const ConditionalHomeomorphism& h, const ParameterStore& p,
                       const SphereTessellation& sphere, int m);

constexpr double kGradientStep = 1e-4;

/// Central-difference gradient of G at each row, N x 3.
Points grad_union(const ConditionalHomeomorphism& h, const ParameterStore& p, const Points& x,
                  double step = kGradientStep);

/// The 6N probe points x +- step e_k, ordered as [+x; -x; +y; -y; +z; -z] blocks.
Points gradient_probes(const Points& x, double step);
/// Assembles N x 3 central differences from the union values at the probes.
ad::Var gradient_from_probes(ad::Var probe_values, Eigen::Index n, double step);
/// Differentiable central-difference gradient of G (each probe evaluation is a
/// graph node, so the result is differentiable in the parameters).
ad::Var grad_union(const ConditionalHomeomorphism& h, ad::Graph& g, const Points& x,
                   double step = kGradientStep);

}  // namespace nparts
