// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/homeo.hpp"

#include <array>
#include <cmath>

#include "nparts/errors.hpp"

namespace nparts {

namespace {

constexpr Eigen::Index kChunkRows = 4096;

struct PlainOps {
  using T = Eigen::MatrixXd;
  const ParameterStore& store;

  T param(const std::string& name) const { return store.matrix(name); }
  T embedding_row(int m) const {
    const auto& e = store.entry(store.index_of(ConditionalHomeomorphism::embedding_name()));
    T row(1, e.cols);
    for (Eigen::Index j = 0; j < e.cols; ++j) row(0, j) = e.data[m * e.cols + j];
    return row;
  }
  static T matmul(const T& a, const T& b) { return a * b; }
  static T add(const T& a, const T& b) { return a + b; }
  static T sub(const T& a, const T& b) { return a - b; }
  static T mul(const T& a, const T& b) { return a.cwiseProduct(b); }
  static T add_row(const T& a, const T& row) {
    T out = a;
    out.rowwise() += row.row(0);
    return out;
  }
  static T relu(const T& a) { return a.cwiseMax(0.0); }
  static T hardtanh(const T& a, double lo, double hi) { return a.cwiseMax(lo).cwiseMin(hi); }
  static T exp(const T& a) { return a.array().exp().matrix(); }
  static T neg(const T& a) { return -a; }
  static T column(const T& a, Eigen::Index j) { return a.col(j); }
  static T hcat(const std::array<T, 3>& cols) {
    T out(cols[0].rows(), 3);
    for (int k = 0; k < 3; ++k) out.col(k) = cols[k].col(0);
    return out;
  }
  static T hcat2(const T& a, const T& b) {
    T out(a.rows(), 2);
    out.col(0) = a.col(0);
    out.col(1) = b.col(0);
    return out;
  }
};

struct GraphOps {
  using T = ad::Var;
  ad::Graph& graph;

  T param(const std::string& name) const { return graph.parameter(name); }
  T embedding_row(int m) const {
    const Eigen::Index row = m;
    return ad::gather_rows(graph.parameter(ConditionalHomeomorphism::embedding_name()),
                           std::span<const Eigen::Index>(&row, 1));
  }
  static T matmul(T a, T b) { return ad::matmul(a, b); }
  static T add(T a, T b) { return ad::add(a, b); }
  static T sub(T a, T b) { return ad::sub(a, b); }
  static T mul(T a, T b) { return ad::mul(a, b); }
  static T add_row(T a, T row) { return ad::add_row(a, row); }
  static T relu(T a) { return ad::relu(a); }
  static T hardtanh(T a, double lo, double hi) { return ad::hardtanh(a, lo, hi); }
  static T exp(T a) { return ad::exp(a); }
  static T neg(T a) { return ad::neg(a); }
  static T column(T a, Eigen::Index j) { return ad::column(a, j); }
  static T hcat(const std::array<T, 3>& cols) { return ad::hcat(cols); }
  static T hcat2(T a, T b) {
    const std::array<T, 2> parts{a, b};
    return ad::hcat(parts);
  }
};

void check_points(const Points& x) {
  if (x.cols() != 3) throw UsageError("expected N x 3 points");
  if (!x.allFinite()) throw NumericError("numeric overflow: non-finite input point");
}

template <class Fn>
Eigen::MatrixXd chunked(const Points& x, Eigen::Index out_cols, Fn&& fn) {
  Eigen::MatrixXd out(x.rows(), out_cols);
  for (Eigen::Index start = 0; start < x.rows(); start += kChunkRows) {
    const Eigen::Index n = std::min(kChunkRows, x.rows() - start);
    out.middleRows(start, n) = fn(Points(x.middleRows(start, n)));
  }
  return out;
}

}  // namespace

void HomeoConfig::validate() const {
  if (primitives < 1) throw UsageError("primitive count must be >= 1");
  if (layers < 0) throw UsageError("layer count must be >= 0");
  if (hidden < 1 || embed_dim < 1 || feature_dim < 1) {
    throw UsageError("network widths must be >= 1");
  }
  if (!(radius > 0.0)) throw UsageError("sphere radius must be positive");
  if (!(scale_clamp > 0.0)) throw UsageError("scale clamp must be positive");
}

nlohmann::json to_json(const HomeoConfig& c) {
  return {{"primitives", c.primitives}, {"layers", c.layers},
          {"hidden", c.hidden},         {"embed_dim", c.embed_dim},
          {"feature_dim", c.feature_dim}, {"radius", c.radius},
          {"scale_clamp", c.scale_clamp}};
}

std::vector<int> draw_split_schedule(int layers, Rng& rng) {
  if (layers < 0) throw UsageError("layer count must be >= 0");
  for (;;) {
    std::vector<int> s;
    while (static_cast<int>(s.size()) < layers) {
      const int d = static_cast<int>(uniform_index(rng, 3));
      if (!s.empty() && d == s.back()) continue;
      s.push_back(d);
    }
    if (layers < 3) return s;
    std::array<bool, 3> seen{};
    for (int d : s) seen[static_cast<std::size_t>(d)] = true;
    if (seen[0] && seen[1] && seen[2]) return s;
  }
}

ConditionalHomeomorphism::ConditionalHomeomorphism(HomeoConfig config, std::vector<int> schedule)
    : config_(config), schedule_(std::move(schedule)) {
  config_.validate();
  if (static_cast<int>(schedule_.size()) != config_.layers) {
    throw UsageError("split schedule length " + std::to_string(schedule_.size()) +
                     " does not match layer count " + std::to_string(config_.layers));
  }
  for (std::size_t l = 0; l < schedule_.size(); ++l) {
    if (schedule_[l] < 0 || schedule_[l] > 2) throw UsageError("split dimension must be 0, 1 or 2");
    if (l > 0 && schedule_[l] == schedule_[l - 1]) {
      throw UsageError("consecutive coupling layers must transform different dimensions");
    }
  }
}

std::string ConditionalHomeomorphism::param_name(int layer, const std::string& net,
                                                 const std::string& field) {
  return "coupling" + std::to_string(layer) + "." + net + "." + field;
}

ParameterStore ConditionalHomeomorphism::parameter_layout() const {
  const auto& c = config_;
  ParameterStore store;
  for (int l = 0; l < c.layers; ++l) {
    store.add(param_name(l, "p", "fc0.weight"), 2, c.hidden);
    store.add(param_name(l, "p", "fc0.bias"), 1, c.hidden);
    store.add(param_name(l, "p", "fc1.weight"), c.hidden, c.feature_dim);
    store.add(param_name(l, "p", "fc1.bias"), 1, c.feature_dim);
    for (const char* net : {"s", "t"}) {
      store.add(param_name(l, net, "fc0.weight_embed"), c.embed_dim, c.hidden);
      store.add(param_name(l, net, "fc0.weight_feat"), c.feature_dim, c.hidden);
      store.add(param_name(l, net, "fc0.bias"), 1, c.hidden);
      store.add(param_name(l, net, "fc1.weight"), c.hidden, c.hidden);
      store.add(param_name(l, net, "fc1.bias"), 1, c.hidden);
      store.add(param_name(l, net, "fc2.weight"), c.hidden, 1);
      store.add(param_name(l, net, "fc2.bias"), 1, 1);
    }
  }
  store.add(embedding_name(), c.primitives, c.embed_dim);
  return store;
}

void ConditionalHomeomorphism::init_parameters(ParameterStore& store, Rng& rng,
                                               double embed_init_std) const {
  const auto& c = config_;
  ParameterStore layout = parameter_layout();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& e = layout.entry(i);
    store.add(e.name, e.rows, e.cols);
  }
  auto fill_uniform = [&](const std::string& name, double fan_in) {
    const double a = 1.0 / std::sqrt(fan_in);
    auto& d = store.data(store.index_of(name));
    for (Eigen::Index j = 0; j < d.size(); ++j) d[j] = uniform(rng, -a, a);
  };
  for (int l = 0; l < c.layers; ++l) {
    fill_uniform(param_name(l, "p", "fc0.weight"), 2);
    fill_uniform(param_name(l, "p", "fc0.bias"), 2);
    fill_uniform(param_name(l, "p", "fc1.weight"), c.hidden);
    fill_uniform(param_name(l, "p", "fc1.bias"), c.hidden);
    for (const char* net : {"s", "t"}) {
      const double fan0 = c.embed_dim + c.feature_dim;
      fill_uniform(param_name(l, net, "fc0.weight_embed"), fan0);
      fill_uniform(param_name(l, net, "fc0.weight_feat"), fan0);
      fill_uniform(param_name(l, net, "fc0.bias"), fan0);
      fill_uniform(param_name(l, net, "fc1.weight"), c.hidden);
      fill_uniform(param_name(l, net, "fc1.bias"), c.hidden);
      // fc2 stays zero: s = t = 0 makes every layer the identity.
    }
  }
  auto& emb = store.data(store.index_of(embedding_name()));
  for (Eigen::Index j = 0; j < emb.size(); ++j) emb[j] = embed_init_std * standard_normal(rng);
}

template <class Ops>
typename Ops::T ConditionalHomeomorphism::apply_layer(Ops& ops, int layer,
                                                      const typename Ops::T& x, int m,
                                                      bool inverse) const {
  using T = typename Ops::T;
  if (m < 0 || m >= config_.primitives) throw UsageError("primitive index out of range");
  const int d = schedule_[static_cast<std::size_t>(layer)];
  const int a = d == 0 ? 1 : 0;
  const int b = d == 2 ? 1 : 2;
  auto P = [&](const char* net, const char* field) {
    return ops.param(param_name(layer, net, field));
  };

  const T xa = Ops::column(x, a);
  const T xb = Ops::column(x, b);
  T feat = Ops::relu(Ops::add_row(Ops::matmul(Ops::hcat2(xa, xb), P("p", "fc0.weight")),
                                  P("p", "fc0.bias")));
  feat = Ops::add_row(Ops::matmul(feat, P("p", "fc1.weight")), P("p", "fc1.bias"));

  const T embed = ops.embedding_row(m);
  auto head = [&](const char* net) {
    // [C; f] W0 = C W0_embed + f W0_feat; the embedding term is one row.
    const T ctx = Ops::add(Ops::matmul(embed, P(net, "fc0.weight_embed")), P(net, "fc0.bias"));
    T h = Ops::relu(Ops::add_row(Ops::matmul(feat, P(net, "fc0.weight_feat")), ctx));
    h = Ops::relu(Ops::add_row(Ops::matmul(h, P(net, "fc1.weight")), P(net, "fc1.bias")));
    return Ops::add_row(Ops::matmul(h, P(net, "fc2.weight")), P(net, "fc2.bias"));
  };
  const T s = Ops::hardtanh(head("s"), -config_.scale_clamp, config_.scale_clamp);
  const T t = head("t");

  const T z = Ops::column(x, d);
  const T z_out = inverse ? Ops::mul(Ops::sub(z, t), Ops::exp(Ops::neg(s)))
                          : Ops::add(Ops::mul(z, Ops::exp(s)), t);
  std::array<T, 3> cols;
  cols[static_cast<std::size_t>(a)] = xa;
  cols[static_cast<std::size_t>(b)] = xb;
  cols[static_cast<std::size_t>(d)] = z_out;
  return Ops::hcat(cols);
}

Points ConditionalHomeomorphism::coupling_forward(const ParameterStore& p, int layer,
                                                  const Points& x, int m) const {
  check_points(x);
  PlainOps ops{p};
  return apply_layer(ops, layer, x, m, false);
}

Points ConditionalHomeomorphism::coupling_inverse(const ParameterStore& p, int layer,
                                                  const Points& x, int m) const {
  check_points(x);
  PlainOps ops{p};
  return apply_layer(ops, layer, x, m, true);
}

Points ConditionalHomeomorphism::forward(const ParameterStore& p, const Points& y, int m) const {
  check_points(y);
  if (y.rows() == 0) return Points(0, 3);
  PlainOps ops{p};
  Points out = chunked(y, 3, [&](Points chunk) {
    for (int l = 0; l < config_.layers; ++l) chunk = apply_layer(ops, l, chunk, m, false);
    return chunk;
  });
  if (!out.allFinite()) throw NumericError("numeric overflow in forward map");
  return out;
}

Points ConditionalHomeomorphism::inverse(const ParameterStore& p, const Points& x, int m) const {
  check_points(x);
  if (x.rows() == 0) return Points(0, 3);
  PlainOps ops{p};
  Points out = chunked(x, 3, [&](Points chunk) {
    for (int l = config_.layers; l-- > 0;) chunk = apply_layer(ops, l, chunk, m, true);
    return chunk;
  });
  if (!out.allFinite()) throw NumericError("numeric overflow in inverse map");
  return out;
}

Eigen::VectorXd ConditionalHomeomorphism::implicit(const ParameterStore& p, const Points& x,
                                                   int m) const {
  const Points y = inverse(p, x, m);
  return (y.rowwise().norm().array() - config_.radius).matrix();
}

Eigen::MatrixXd ConditionalHomeomorphism::implicit_all(const ParameterStore& p,
                                                       const Points& x) const {
  Eigen::MatrixXd out(x.rows(), config_.primitives);
  for (int m = 0; m < config_.primitives; ++m) out.col(m) = implicit(p, x, m);
  return out;
}

ad::Var ConditionalHomeomorphism::coupling_forward(ad::Graph& g, int layer, ad::Var x,
                                                   int m) const {
  GraphOps ops{g};
  return apply_layer(ops, layer, x, m, false);
}

ad::Var ConditionalHomeomorphism::coupling_inverse(ad::Graph& g, int layer, ad::Var x,
                                                   int m) const {
  GraphOps ops{g};
  return apply_layer(ops, layer, x, m, true);
}

ad::Var ConditionalHomeomorphism::forward(ad::Graph& g, ad::Var y, int m) const {
  GraphOps ops{g};
  for (int l = 0; l < config_.layers; ++l) y = apply_layer(ops, l, y, m, false);
  return y;
}

ad::Var ConditionalHomeomorphism::inverse(ad::Graph& g, ad::Var x, int m) const {
  GraphOps ops{g};
  for (int l = config_.layers; l-- > 0;) x = apply_layer(ops, l, x, m, true);
  return x;
}

ad::Var ConditionalHomeomorphism::implicit(ad::Graph& g, ad::Var x, int m) const {
  return ad::add_scalar(ad::row_norm(inverse(g, x, m)), -config_.radius);
}

ad::Var ConditionalHomeomorphism::implicit_all(ad::Graph& g, ad::Var x) const {
  std::vector<ad::Var> cols;
  for (int m = 0; m < config_.primitives; ++m) cols.push_back(implicit(g, x, m));
  return ad::hcat(cols);
}

UnionField implicit_union(const ConditionalHomeomorphism& h, const ParameterStore& p,
                          const Points& x) {
  const Eigen::MatrixXd all = h.implicit_all(p, x);
  UnionField out;
  out.value.resize(x.rows());
  out.argmin.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index m = 1; m < all.cols(); ++m) {
      if (all(i, m) < all(i, best)) best = m;
    }
    out.value[i] = all(i, best);
    out.argmin[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

ad::Var implicit_union(const ConditionalHomeomorphism& h, ad::Graph& g, ad::Var x) {
  return ad::row_min(h.implicit_all(g, x));
}

Points surface_points(const ConditionalHomeomorphism& h, const ParameterStore& p,
                      const Points& sphere_samples, int m) {
  if (sphere_samples.rows() == 0) return Points(0, 3);
  check_points(sphere_samples);
  const double r = h.radius();
  for (Eigen::Index i = 0; i < sphere_samples.rows(); ++i) {
    if (std::abs(sphere_samples.row(i).norm() - r) > 1e-12 * std::max(1.0, r)) {
      throw UsageError("surface_points: sample " + std::to_string(i) +
                       " is not on the latent sphere");
    }
  }
  return h.forward(p, sphere_samples, m);
}

std::vector<Eigen::Index> union_surface_rows(const ConditionalHomeomorphism& h,
                                             const ParameterStore& p, const Points& stacked,
                                             const std::vector<Eigen::Index>& counts,
                                             double eps) {
  std::vector<Eigen::Index> keep;
  if (stacked.rows() == 0) return keep;
  if (h.primitives() == 1) {
    keep.resize(static_cast<std::size_t>(stacked.rows()));
    for (Eigen::Index i = 0; i < stacked.rows(); ++i) keep[static_cast<std::size_t>(i)] = i;
    return keep;
  }
  const Eigen::MatrixXd all = h.implicit_all(p, stacked);
  Eigen::Index row = 0;
  for (std::size_t m = 0; m < counts.size(); ++m) {
    for (Eigen::Index k = 0; k < counts[m]; ++k, ++row) {
      // The point's own primitive evaluates to ~0; only other primitives can
      // push G below -eps.
      bool interior = false;
      for (Eigen::Index o = 0; o < all.cols() && !interior; ++o) {
        if (o != static_cast<Eigen::Index>(m) && all(row, o) < -eps) interior = true;
      }
      if (!interior && all(row, static_cast<Eigen::Index>(m)) >= -eps) keep.push_back(row);
    }
  }
  return keep;
}

LabeledPoints union_surface(const ConditionalHomeomorphism& h, const ParameterStore& p,
                            const std::vector<Points>& per_primitive, double eps) {
  Eigen::Index total = 0;
  std::vector<Eigen::Index> counts;
  for (const auto& pts : per_primitive) {
    counts.push_back(pts.rows());
    total += pts.rows();
  }
  Points stacked(total, 3);
  std::vector<int> owner;
  Eigen::Index r = 0;
  for (std::size_t m = 0; m < per_primitive.size(); ++m) {
    if (counts[m] > 0) stacked.middleRows(r, counts[m]) = per_primitive[m];
    r += counts[m];
    owner.insert(owner.end(), static_cast<std::size_t>(counts[m]), static_cast<int>(m));
  }
  LabeledPoints out;
  out.source_row = union_surface_rows(h, p, stacked, counts, eps);
  out.points.resize(static_cast<Eigen::Index>(out.source_row.size()), 3);
  for (std::size_t k = 0; k < out.source_row.size(); ++k) {
    out.points.row(static_cast<Eigen::Index>(k)) = stacked.row(out.source_row[k]);
    out.primitive.push_back(owner[static_cast<std::size_t>(out.source_row[k])]);
  }
  return out;
}

TriMesh primitive_mesh(const ConditionalHomeomorphism& h, const ParameterStore& p,
                       const SphereTessellation& sphere, int m) {
  TriMesh out;
  out.vertices = h.forward(p, sphere.mesh.vertices, m);
  out.faces = sphere.mesh.faces;
  return out;
}

Points gradient_probes(const Points& x, double step) {
  const Eigen::Index n = x.rows();
  Points probes(6 * n, 3);
  for (int k = 0; k < 3; ++k) {
    Points plus = x;
    Points minus = x;
    plus.col(k).array() += step;
    minus.col(k).array() -= step;
    probes.middleRows((2 * k) * n, n) = plus;
    probes.middleRows((2 * k + 1) * n, n) = minus;
  }
  return probes;
}

Points grad_union(const ConditionalHomeomorphism& h, const ParameterStore& p, const Points& x,
                  double step) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd v = implicit_union(h, p, gradient_probes(x, step)).value;
  Points grad(n, 3);
  for (int k = 0; k < 3; ++k) {
    grad.col(k) = (v.segment((2 * k) * n, n) - v.segment((2 * k + 1) * n, n)) / (2.0 * step);
  }
  return grad;
}

ad::Var gradient_from_probes(ad::Var probe_values, Eigen::Index n, double step) {
  std::array<ad::Var, 3> cols;
  for (int k = 0; k < 3; ++k) {
    const ad::Var plus = ad::slice_rows(probe_values, (2 * k) * n, n);
    const ad::Var minus = ad::slice_rows(probe_values, (2 * k + 1) * n, n);
    cols[static_cast<std::size_t>(k)] = ad::scale(ad::sub(plus, minus), 1.0 / (2.0 * step));
  }
  return ad::hcat(cols);
}

ad::Var grad_union(const ConditionalHomeomorphism& h, ad::Graph& g, const Points& x,
                   double step) {
  const ad::Var values = implicit_union(h, g, g.constant(gradient_probes(x, step)));
  return gradient_from_probes(values, x.rows(), step);
}

}  // namespace nparts
