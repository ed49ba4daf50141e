// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <unsupported/Eigen/BVH>

#include "nparts/errors.hpp"

namespace Eigen {
inline AlignedBox3d bounding_box(const Vector3d& v) { return AlignedBox3d(v, v); }
}  // namespace Eigen

namespace nparts {

double iou_from_labels(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw UsageError("iou: label count mismatch");
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += a[i] && b[i];
    either += a[i] || b[i];
  }
  if (either == 0) throw DataError("iou undefined: both shapes are empty in the sampled volume");
  return static_cast<double>(both) / static_cast<double>(either);
}

double iou(const InsideFn& a, const InsideFn& b, Eigen::Index n, Rng& rng, const Box& box) {
  if (n < 1) throw UsageError("iou: sample count must be >= 1");
  const Points x = sample_box(box, n, rng);
  return iou_from_labels(a(x), b(x));
}

InsideFn union_inside(const ConditionalHomeomorphism& h, const ParameterStore& p) {
  return [&h, &p](const Points& x) {
    const Eigen::VectorXd g = implicit_union(h, p, x).value;
    std::vector<bool> in(static_cast<std::size_t>(g.size()));
    for (Eigen::Index i = 0; i < g.size(); ++i) in[static_cast<std::size_t>(i)] = g(i) < 0.0;
    return in;
  };
}

InsideFn mesh_inside(const InsideTester& tester) {
  return [&tester](const Points& x) { return tester.contains(x); };
}

namespace {

struct NearestSquared {
  using Scalar = double;
  Eigen::Vector3d query;
  double minimumOnVolume(const Eigen::AlignedBox3d& box) const {
    return box.squaredExteriorDistance(query);
  }
  double minimumOnObject(const Eigen::Vector3d& p) const { return (p - query).squaredNorm(); }
};

double mean_nearest(const Points& from, const Points& to) {
  std::vector<Eigen::Vector3d> targets(static_cast<std::size_t>(to.rows()));
  for (Eigen::Index j = 0; j < to.rows(); ++j) targets[static_cast<std::size_t>(j)] = to.row(j).transpose();
  const Eigen::KdBVH<double, 3, Eigen::Vector3d> tree(targets.begin(), targets.end());
  double total = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    NearestSquared nearest{from.row(i).transpose()};
    total += std::sqrt(Eigen::BVMinimize(tree, nearest));
  }
  return total / static_cast<double>(from.rows());
}

}  // namespace

double chamfer_l1(const Points& x, const Points& y) {
  if (x.rows() == 0 || y.rows() == 0) throw UsageError("chamfer_l1: empty point set");
  return mean_nearest(x, y) + mean_nearest(y, x);
}

UnionMesh union_mesh(const ConditionalHomeomorphism& h, const ParameterStore& p,
                     const SphereTessellation& sphere, double eps) {
  const int M = h.primitives();
  std::vector<TriMesh> parts;
  for (int m = 0; m < M; ++m) parts.push_back(primitive_mesh(h, p, sphere, m));
  const Eigen::Index F = sphere.mesh.face_count();
  const Eigen::Index V = sphere.mesh.vertex_count();

  Points centroids(F * M, 3);
  for (int m = 0; m < M; ++m) {
    for (Eigen::Index f = 0; f < F; ++f) {
      const auto t = parts[static_cast<std::size_t>(m)].triangle(f);
      centroids.row(m * F + f) = ((t[0] + t[1] + t[2]) / 3.0).transpose();
    }
  }
  const Eigen::MatrixXd g = M > 1 ? h.implicit_all(p, centroids) : Eigen::MatrixXd(F * M, M);

  UnionMesh out;
  out.retained_area.assign(static_cast<std::size_t>(M), 0.0);
  out.total_area.assign(static_cast<std::size_t>(M), 0.0);
  out.mesh.vertices.resize(V * M, 3);
  std::vector<Eigen::Index> kept_faces;
  for (int m = 0; m < M; ++m) {
    const TriMesh& part = parts[static_cast<std::size_t>(m)];
    out.mesh.vertices.middleRows(m * V, V) = part.vertices;
    for (Eigen::Index f = 0; f < F; ++f) {
      const double area = part.face_area(f);
      out.total_area[static_cast<std::size_t>(m)] += area;
      bool keep = true;
      for (int o = 0; o < M && keep; ++o) {
        if (o != m && g(m * F + f, o) < -eps) keep = false;
      }
      if (!keep) continue;
      out.retained_area[static_cast<std::size_t>(m)] += area;
      kept_faces.push_back(m * F + f);
      out.primitive.push_back(m);
    }
  }
  out.mesh.faces.resize(static_cast<Eigen::Index>(kept_faces.size()), 3);
  for (std::size_t k = 0; k < kept_faces.size(); ++k) {
    const Eigen::Index m = kept_faces[k] / F, f = kept_faces[k] % F;
    out.mesh.faces.row(static_cast<Eigen::Index>(k)) =
        sphere.mesh.faces.row(f).array() + static_cast<int>(m * V);
  }
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"iou", r.iou},
          {"chamfer_l1", r.chamfer_l1},
          {"retention", r.retention},
          {"retained_area", r.retained_area},
          {"multi_containment", r.multi_containment}};
}

std::string csv_header() { return "mesh,M,iou,chamfer_l1,multi_containment"; }

std::string csv_row(const std::string& mesh, int primitives, const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << mesh << ',' << primitives << ',' << r.iou << ',' << r.chamfer_l1
     << ',' << r.multi_containment;
  return os.str();
}

void append_csv(const std::filesystem::path& path, const std::string& mesh, int primitives,
                const EvalReport& r) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write " + path.string());
  if (fresh) out << csv_header() << '\n';
  out << csv_row(mesh, primitives, r) << '\n';
}

EvalReport evaluate(const ConditionalHomeomorphism& h, const ParameterStore& p,
                    const TriMesh& target, const EvalConfig& config) {
  if (config.iou_samples < 1 || config.chamfer_samples < 1) {
    throw UsageError("metric sample counts must be >= 1");
  }
  Rng rng(config.seed);
  const InsideTester tester(target, config.seed);
  EvalReport report;

  const Points x = sample_box(config.box, config.iou_samples, rng);
  const std::vector<bool> target_in = tester.contains(x);
  const Eigen::MatrixXd g = h.implicit_all(p, x);
  std::vector<bool> pred_in(target_in.size());
  std::size_t interior = 0, multi = 0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const auto count = (g.row(i).array() < 0.0).count();
    pred_in[static_cast<std::size_t>(i)] = count > 0;
    if (target_in[static_cast<std::size_t>(i)]) {
      ++interior;
      multi += count >= 2;
    }
  }
  report.iou = iou_from_labels(pred_in, target_in);
  report.multi_containment =
      interior == 0 ? 0.0 : static_cast<double>(multi) / static_cast<double>(interior);

  const UnionMesh um = union_mesh(h, p, uv_sphere(config.lat, config.lon, h.radius()));
  for (std::size_t m = 0; m < um.total_area.size(); ++m) {
    report.retained_area.push_back(um.retained_area[m]);
    report.retention.push_back(um.total_area[m] > 0.0 ? um.retained_area[m] / um.total_area[m] : 0.0);
  }
  if (um.mesh.face_count() == 0) throw NumericError("union mesh has no retained faces");
  const Points pred = SurfaceSampler(um.mesh).sample(config.chamfer_samples, rng).points;
  const Points tgt = SurfaceSampler(target).sample(config.chamfer_samples, rng).points;
  report.chamfer_l1 = chamfer_l1(pred, tgt);
  return report;
}

}  // namespace nparts
