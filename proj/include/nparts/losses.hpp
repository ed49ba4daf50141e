// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <json.hpp>

#include "nparts/diffgraph.hpp"
#include "nparts/geometry.hpp"
#include "nparts/homeo.hpp"

namespace nparts {

struct LossWeights {
  double rec = 1.0;
  double occ = 0.1;
  double norm = 0.01;
  double overlap = 0.1;
  double cover = 0.01;

  void validate() const;
};

struct LossHyper {
  /// Sigmoid temperature of the occupancy indicator.
  double tau = 4e-3;
  /// Overlap threshold: points inside more than lambda primitives are penalized.
  double lambda = 1.95;
  /// Interior points each primitive should contain.
  int k_cover = 10;
  /// Finite-difference step for the field gradient in the normal term.
  double grad_step = kGradientStep;

  void validate(int primitives) const;
};

struct LossBreakdown {
  double rec = 0.0;
  double occ = 0.0;
  double norm = 0.0;
  double overlap = 0.0;
  double cover = 0.0;
  double total = 0.0;
};

nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const LossHyper& h);
nlohmann::json to_json(const LossBreakdown& b);

/// Symmetric squared Chamfer distance between target points and the predicted
/// surface. Throws NumericError when `predicted` is empty.
ad::Var loss_rec(ad::Graph& g, const Points& target, ad::Var predicted);

/// Importance-weighted mean binary cross-entropy between sigmoid(-G/tau) and
/// the labels, in logit form. `union_values` is V x 1.
ad::Var loss_occ(ad::Graph& g, ad::Var union_values, const OccupancySet& batch, double tau);

/// Mean cosine distance between the field gradient (N x 3) and the target
/// normals.
ad::Var loss_norm(ad::Graph& g, ad::Var field_gradient, const Points& normals);

/// Mean over points of max(0, sum_m sigmoid(-g^m/tau) - lambda); `per_primitive`
/// is V x M.
ad::Var loss_overlap(ad::Graph& g, ad::Var per_primitive, double tau, double lambda);

/// For every primitive, the k interior-labeled points with the smallest g^m
/// contribute max(0, g^m). The selection itself carries no gradient.
ad::Var loss_cover(ad::Graph& g, ad::Var per_primitive, const std::vector<bool>& inside, int k);

/// One step's worth of supervision.
struct TrainingBatch {
  SurfaceSamples surface;
  OccupancySet occupancy;
  /// Latent sphere samples, one K x 3 set per primitive.
  std::vector<Points> sphere;
};

struct LossResult {
  ad::Var total;
  LossBreakdown breakdown;
};

/// Weighted sum of the five terms. All implicit-field evaluations for the
/// occupancy points and the normal-term probes share one pass per primitive.
LossResult loss_total(ad::Graph& g, const ConditionalHomeomorphism& h,
                      const ParameterStore& params, const TrainingBatch& batch,
                      const LossWeights& weights, const LossHyper& hyper);

}  // namespace nparts
