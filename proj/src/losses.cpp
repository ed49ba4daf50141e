// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/losses.hpp"

#include <algorithm>
#include <numeric>

#include "nparts/errors.hpp"

namespace nparts {

void LossWeights::validate() const {
  for (double w : {rec, occ, norm, overlap, cover}) {
    if (!(w >= 0.0)) throw UsageError("loss weights must be nonnegative");
  }
}

void LossHyper::validate(int /*primitives*/) const {
  if (!(tau > 0.0)) throw UsageError("tau must be positive");
  // lambda above M is allowed and leaves the overlap term inactive.
  if (!(lambda >= 1.0)) throw UsageError("lambda must be >= 1");
  if (k_cover < 1) throw UsageError("k_cover must be >= 1");
  if (!(grad_step > 0.0)) throw UsageError("gradient step must be positive");
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"rec", w.rec}, {"occ", w.occ}, {"norm", w.norm}, {"overlap", w.overlap},
          {"cover", w.cover}};
}

nlohmann::json to_json(const LossHyper& h) {
  return {{"tau", h.tau}, {"lambda", h.lambda}, {"k_cover", h.k_cover},
          {"grad_step", h.grad_step}};
}

nlohmann::json to_json(const LossBreakdown& b) {
  return {{"rec", b.rec},         {"occ", b.occ},     {"norm", b.norm},
          {"overlap", b.overlap}, {"cover", b.cover}, {"total", b.total}};
}

ad::Var loss_rec(ad::Graph& g, const Points& target, ad::Var predicted) {
  if (predicted.rows() == 0) {
    throw NumericError("all primitive surface points interior");
  }
  if (target.rows() == 0) throw UsageError("loss_rec: empty target point set");
  const ad::Var d = ad::pairwise_sqdist(g.constant(target), predicted);
  const ad::Var completeness = ad::mean(ad::row_min(d));
  const ad::Var accuracy = ad::mean(ad::row_min(ad::transpose(d)));
  return ad::add(completeness, accuracy);
}

ad::Var loss_occ(ad::Graph& g, ad::Var union_values, const OccupancySet& batch, double tau) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw UsageError("loss_occ: empty batch");
  if (union_values.rows() != n || union_values.cols() != 1) {
    throw UsageError("loss_occ: field values must be V x 1");
  }
  Eigen::MatrixXd labels(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) labels(i, 0) = batch.inside[static_cast<std::size_t>(i)];
  // BCE(sigmoid(z), o) = softplus(z) - o z with z = -G / tau.
  const ad::Var logits = ad::scale(union_values, -1.0 / tau);
  const ad::Var per_point = ad::sub(ad::softplus(logits), ad::mul(logits, g.constant(labels)));
  return ad::mean(ad::mul(per_point, g.constant(Eigen::MatrixXd(batch.weights))));
}

ad::Var loss_norm(ad::Graph& g, ad::Var field_gradient, const Points& normals) {
  if (field_gradient.rows() != normals.rows() || field_gradient.cols() != 3) {
    throw UsageError("loss_norm: gradient and normals must both be N x 3");
  }
  if (normals.rows() == 0) throw UsageError("loss_norm: no samples");
  const ad::Var dot = ad::row_sum(ad::mul(field_gradient, g.constant(normals)));
  const ad::Var len = ad::clamp_min(ad::row_norm(field_gradient), 1e-12);
  return ad::add_scalar(ad::neg(ad::mean(ad::div(dot, len))), 1.0);
}

ad::Var loss_overlap(ad::Graph& /*g*/, ad::Var per_primitive, double tau, double lambda) {
  if (per_primitive.rows() == 0) throw UsageError("loss_overlap: empty batch");
  const ad::Var inside = ad::sigmoid(ad::scale(per_primitive, -1.0 / tau));
  return ad::mean(ad::hinge(ad::row_sum(inside), lambda));
}

ad::Var loss_cover(ad::Graph& g, ad::Var per_primitive, const std::vector<bool>& inside, int k) {
  if (static_cast<Eigen::Index>(inside.size()) != per_primitive.rows()) {
    throw UsageError("loss_cover: label count mismatch");
  }
  std::vector<Eigen::Index> interior;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    if (inside[i]) interior.push_back(static_cast<Eigen::Index>(i));
  }
  if (static_cast<int>(interior.size()) < k) {
    throw UsageError("loss_cover: batch has " + std::to_string(interior.size()) +
                     " interior points, fewer than k_cover = " + std::to_string(k));
  }
  const Eigen::MatrixXd values = per_primitive.value();
  ad::Var total = g.constant(0.0);
  for (Eigen::Index m = 0; m < values.cols(); ++m) {
    std::vector<Eigen::Index> order = interior;
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return values(a, m) < values(b, m) || (values(a, m) == values(b, m) && a < b);
                      });
    order.resize(static_cast<std::size_t>(k));
    const ad::Var nearest = ad::column(ad::gather_rows(per_primitive, order), m);
    total = ad::add(total, ad::sum(ad::hinge(nearest, 0.0)));
  }
  return total;
}

LossResult loss_total(ad::Graph& g, const ConditionalHomeomorphism& h,
                      const ParameterStore& params, const TrainingBatch& batch,
                      const LossWeights& weights, const LossHyper& hyper) {
  weights.validate();
  hyper.validate(h.primitives());
  const int M = h.primitives();
  if (static_cast<int>(batch.sphere.size()) != M) {
    throw UsageError("training batch needs one sphere sample set per primitive");
  }
  const Eigen::Index V = batch.occupancy.size();
  const Eigen::Index N = batch.surface.points.rows();

  // One implicit-field pass over [occupancy points; normal probes].
  Points stacked(V + 6 * N, 3);
  stacked.topRows(V) = batch.occupancy.points;
  stacked.bottomRows(6 * N) = gradient_probes(batch.surface.points, hyper.grad_step);
  const ad::Var per_primitive_all = h.implicit_all(g, g.constant(std::move(stacked)));
  const ad::Var union_all = ad::row_min(per_primitive_all);
  const ad::Var per_primitive = ad::slice_rows(per_primitive_all, 0, V);
  const ad::Var union_occ = ad::slice_rows(union_all, 0, V);
  const ad::Var field_grad =
      gradient_from_probes(ad::slice_rows(union_all, V, 6 * N), N, hyper.grad_step);

  // Predicted union surface.
  std::vector<ad::Var> mapped;
  std::vector<Eigen::Index> counts;
  for (int m = 0; m < M; ++m) {
    mapped.push_back(h.forward(g, g.constant(batch.sphere[static_cast<std::size_t>(m)]), m));
    counts.push_back(batch.sphere[static_cast<std::size_t>(m)].rows());
  }
  const ad::Var all_surface = ad::vcat(mapped);
  const auto keep = union_surface_rows(h, params, all_surface.value(), counts);
  const ad::Var predicted = ad::gather_rows(all_surface, keep);

  const ad::Var rec = loss_rec(g, batch.surface.points, predicted);
  const ad::Var occ = loss_occ(g, union_occ, batch.occupancy, hyper.tau);
  const ad::Var norm = loss_norm(g, field_grad, batch.surface.normals);
  const ad::Var overlap = loss_overlap(g, per_primitive, hyper.tau, hyper.lambda);
  const ad::Var cover = loss_cover(g, per_primitive, batch.occupancy.inside, hyper.k_cover);

  LossResult out;
  out.breakdown.rec = rec.scalar();
  out.breakdown.occ = occ.scalar();
  out.breakdown.norm = norm.scalar();
  out.breakdown.overlap = overlap.scalar();
  out.breakdown.cover = cover.scalar();

  ad::Var total = g.constant(0.0);
  for (auto [w, term] : {std::pair{weights.rec, rec}, std::pair{weights.occ, occ},
                         std::pair{weights.norm, norm}, std::pair{weights.overlap, overlap},
                         std::pair{weights.cover, cover}}) {
    if (w != 0.0) total = ad::add(total, ad::scale(term, w));
  }
  out.total = total;
  out.breakdown.total = total.scalar();
  return out;
}

}  // namespace nparts
