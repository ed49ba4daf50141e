// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

#include "nparts/blob_io.hpp"
#include "nparts/errors.hpp"

namespace nparts {

namespace {

constexpr double kEdgeTolerance = 1e-9;

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::map<std::uint64_t, int> edge_use_counts(const TriMesh& mesh) {
  std::map<std::uint64_t, int> uses;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      ++uses[edge_key(mesh.faces(f, k), mesh.faces(f, (k + 1) % 3))];
    }
  }
  return uses;
}

Eigen::Vector3d random_direction(Rng& rng) {
  for (;;) {
    Eigen::Vector3d d(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    const double n = d.norm();
    if (n > 1e-12) return d / n;
  }
}

}  // namespace

std::array<Eigen::Vector3d, 3> TriMesh::triangle(Eigen::Index f) const {
  return {vertex(faces(f, 0)), vertex(faces(f, 1)), vertex(faces(f, 2))};
}

double TriMesh::face_area(Eigen::Index f) const {
  const auto [a, b, c] = triangle(f);
  return 0.5 * (b - a).cross(c - a).norm();
}

Eigen::Vector3d TriMesh::face_normal(Eigen::Index f) const {
  const auto [a, b, c] = triangle(f);
  return (b - a).cross(c - a).normalized();
}

double TriMesh::total_area() const {
  double s = 0.0;
  for (Eigen::Index f = 0; f < face_count(); ++f) s += face_area(f);
  return s;
}

Eigen::Index TriMesh::edge_count() const {
  return static_cast<Eigen::Index>(edge_use_counts(*this).size());
}

Eigen::Index TriMesh::euler_characteristic() const {
  return vertex_count() - edge_count() + face_count();
}

Eigen::Index count_non_manifold_edges(const TriMesh& mesh) {
  Eigen::Index bad = 0;
  for (const auto& [key, n] : edge_use_counts(mesh)) {
    if (n != 2) ++bad;
  }
  return bad;
}

TriMesh parse_obj(const std::string& text) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<int, 3>> tris;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ls >> p.x() >> p.y() >> p.z())) {
        throw DataError("OBJ line " + std::to_string(line_no) + ": malformed vertex");
      }
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int idx = 0;
        try {
          std::size_t used = 0;
          idx = std::stoi(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw DataError("OBJ line " + std::to_string(line_no) + ": bad face index '" + tok + "'");
        }
        const int n = static_cast<int>(verts.size());
        const int zero_based = idx > 0 ? idx - 1 : n + idx;
        if (idx == 0 || zero_based < 0 || zero_based >= n) {
          throw DataError("OBJ line " + std::to_string(line_no) + ": face index " +
                          std::to_string(idx) + " out of range (" + std::to_string(n) +
                          " vertices)");
        }
        poly.push_back(zero_based);
      }
      if (poly.size() < 3) {
        throw DataError("OBJ line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        tris.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  if (verts.empty() || tris.empty()) throw DataError("OBJ mesh is empty");

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) {
    mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  }
  std::vector<std::array<int, 3>> kept;
  for (const auto& t : tris) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    const Eigen::Vector3d a = verts[t[0]], b = verts[t[1]], c = verts[t[2]];
    if ((b - a).cross(c - a).norm() == 0.0) continue;
    kept.push_back(t);
  }
  if (kept.empty()) throw DataError("OBJ mesh has only degenerate faces");
  mesh.faces.resize(static_cast<Eigen::Index>(kept.size()), 3);
  for (std::size_t f = 0; f < kept.size(); ++f) {
    for (int k = 0; k < 3; ++k) mesh.faces(static_cast<Eigen::Index>(f), k) = kept[f][k];
  }
  return mesh;
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mesh: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_obj(buf.str());
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' '
        << mesh.vertices(i, 2) << '\n';
  }
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

NormalizedMesh normalize_mesh(const TriMesh& mesh, double target_extent) {
  if (mesh.vertex_count() == 0) throw DataError("cannot normalize an empty mesh");
  const Eigen::Vector3d lo = mesh.vertices.colwise().minCoeff().transpose();
  const Eigen::Vector3d hi = mesh.vertices.colwise().maxCoeff().transpose();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw DataError("cannot normalize a zero-extent mesh");
  NormalizedMesh out;
  out.transform.center = 0.5 * (lo + hi);
  out.transform.scale = target_extent / extent;
  out.mesh = mesh;
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    out.mesh.vertices.row(i) = out.transform.apply(mesh.vertex(i)).transpose();
  }
  return out;
}

SurfaceSampler::SurfaceSampler(const TriMesh& mesh) : mesh_(mesh) {
  if (mesh.face_count() == 0) throw DataError("cannot sample an empty mesh");
  cdf_.resize(static_cast<std::size_t>(mesh.face_count()));
  double acc = 0.0;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    acc += mesh.face_area(f);
    cdf_[static_cast<std::size_t>(f)] = acc;
  }
  if (!(acc > 0.0)) throw DataError("mesh has zero surface area");
}

SurfaceSamples SurfaceSampler::sample(Eigen::Index n, Rng& rng) const {
  if (n < 1) throw UsageError("sample_surface needs n >= 1");
  SurfaceSamples out;
  out.points.resize(n, 3);
  out.normals.resize(n, 3);
  out.faces.resize(static_cast<std::size_t>(n));
  const double total = cdf_.back();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    const auto f = static_cast<Eigen::Index>(it - cdf_.begin());
    double r1 = uniform01(rng);
    double r2 = uniform01(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const auto [a, b, c] = mesh_.triangle(f);
    out.points.row(i) = (a + r1 * (b - a) + r2 * (c - a)).transpose();
    out.normals.row(i) = mesh_.face_normal(f).transpose();
    out.faces[static_cast<std::size_t>(i)] = f;
  }
  return out;
}

SurfaceSamples sample_surface(const TriMesh& mesh, Eigen::Index n, Rng& rng) {
  return SurfaceSampler(mesh).sample(n, rng);
}

InsideTester::InsideTester(const TriMesh& mesh, std::uint64_t seed) : mesh_(mesh), seed_(seed) {
  if (mesh.face_count() == 0) throw DataError("containment query on an empty mesh");
  const Eigen::Index bad = count_non_manifold_edges(mesh);
  if (bad != 0) {
    throw DataError("mesh is not watertight: " + std::to_string(bad) +
                    " edges are not shared by exactly two faces");
  }
  order_.resize(static_cast<std::size_t>(mesh.face_count()));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(2 * order_.size());
  build(0, static_cast<int>(order_.size()));
  Rng rng(seed);
  for (auto& d : directions_) d = random_direction(rng);
}

int InsideTester::build(int first, int count) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centroids;
  for (int k = first; k < first + count; ++k) {
    const auto [a, b, c] = mesh_.triangle(order_[k]);
    box.extend(a).extend(b).extend(c);
    centroids.extend(Eigen::Vector3d((a + b + c) / 3.0));
  }
  nodes_[id].box = box;
  if (count <= 4) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  Eigen::Index axis = 0;
  centroids.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int fa, int fb) {
                     const auto ta = mesh_.triangle(fa);
                     const auto tb = mesh_.triangle(fb);
                     const double ca = ta[0][axis] + ta[1][axis] + ta[2][axis];
                     const double cb = tb[0][axis] + tb[1][axis] + tb[2][axis];
                     return ca < cb || (ca == cb && fa < fb);
                   });
  const int left = build(first, mid - first);
  const int right = build(mid, first + count - mid);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

InsideTester::RayResult InsideTester::cast(const Eigen::Vector3d& origin,
                                           const Eigen::Vector3d& dir, int& hits) const {
  hits = 0;
  const Eigen::Vector3d inv = dir.cwiseInverse();
  std::vector<int> stack{0};
  stack.reserve(64);
  while (!stack.empty()) {
    const BvhNode& node = nodes_[stack.back()];
    stack.pop_back();
    // Slab test.
    double tmin = 0.0;
    double tmax = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      double t0 = (node.box.min()[k] - origin[k]) * inv[k];
      double t1 = (node.box.max()[k] - origin[k]) * inv[k];
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
    }
    if (tmin > tmax * (1.0 + 1e-12) + 1e-12) continue;
    if (node.left >= 0) {
      stack.push_back(node.left);
      stack.push_back(node.right);
      continue;
    }
    for (int k = node.first; k < node.first + node.count; ++k) {
      const auto [a, b, c] = mesh_.triangle(order_[k]);
      const Eigen::Vector3d e1 = b - a;
      const Eigen::Vector3d e2 = c - a;
      const Eigen::Vector3d p = dir.cross(e2);
      const double det = e1.dot(p);
      if (std::abs(det) < 1e-300) continue;
      const Eigen::Vector3d s = origin - a;
      const double u = s.dot(p) / det;
      const Eigen::Vector3d q = s.cross(e1);
      const double v = dir.dot(q) / det;
      const double t = e2.dot(q) / det;
      if (t <= 0.0) continue;
      const double w = 1.0 - u - v;
      if (u < -kEdgeTolerance || v < -kEdgeTolerance || w < -kEdgeTolerance) continue;
      if (u < kEdgeTolerance || v < kEdgeTolerance || w < kEdgeTolerance) {
        return RayResult::kDegenerate;
      }
      ++hits;
    }
  }
  return RayResult::kCount;
}

bool InsideTester::contains(const Eigen::Vector3d& x) const {
  int votes = 0;
  for (int r = 0; r < 3; ++r) {
    Eigen::Vector3d dir = directions_[static_cast<std::size_t>(r)];
    int hits = 0;
    std::uint64_t h = hash_combine(seed_, static_cast<std::uint64_t>(r));
    for (int k = 0; k < 3; ++k) h = hash_combine(h, std::bit_cast<std::uint64_t>(x[k]));
    Rng redraw(h);
    int attempts = 0;
    while (cast(x, dir, hits) == RayResult::kDegenerate && ++attempts < 32) {
      dir = random_direction(redraw);
    }
    if (hits % 2 == 1) ++votes;
  }
  return votes >= 2;
}

std::vector<bool> InsideTester::contains(const Points& points) const {
  std::vector<bool> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = contains(Eigen::Vector3d(points.row(i).transpose()));
  }
  return out;
}

Points sample_box(const Box& box, Eigen::Index n, Rng& rng) {
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) p(i, k) = uniform(rng, box.lo[k], box.hi[k]);
  }
  return p;
}

OccupancyPool::OccupancyPool(Points points, std::vector<bool> inside)
    : points_(std::move(points)), inside_(std::move(inside)) {
  if (points_.rows() != static_cast<Eigen::Index>(inside_.size())) {
    throw UsageError("occupancy pool: label count mismatch");
  }
  for (std::size_t i = 0; i < inside_.size(); ++i) {
    (inside_[i] ? inside_idx_ : outside_idx_).push_back(static_cast<Eigen::Index>(i));
  }
  if (inside_idx_.empty()) throw DataError("mesh has no interior at this resolution");
  if (outside_idx_.empty()) throw DataError("mesh fills the whole sampling volume");
}

double OccupancyPool::inside_fraction() const {
  return static_cast<double>(inside_idx_.size()) / static_cast<double>(size());
}

double OccupancyPool::weight(bool inside) const {
  const auto n = inside ? inside_idx_.size() : outside_idx_.size();
  return 2.0 * static_cast<double>(n) / static_cast<double>(size());
}

OccupancySet OccupancyPool::draw_batch(Eigen::Index n, Rng& rng) const {
  if (n < 2) throw UsageError("occupancy batch needs at least 2 points");
  OccupancySet out;
  out.points.resize(n, 3);
  out.inside.resize(static_cast<std::size_t>(n));
  out.weights.resize(n);
  const Eigen::Index n_in = n / 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool in = i < n_in;
    const auto& pool = in ? inside_idx_ : outside_idx_;
    const Eigen::Index j = pool[uniform_index(rng, pool.size())];
    out.points.row(i) = points_.row(j);
    out.inside[static_cast<std::size_t>(i)] = in;
    out.weights[i] = weight(in);
  }
  return out;
}

void OccupancyPool::save(const std::filesystem::path& manifest_path) const {
  std::filesystem::path blob = manifest_path;
  blob.replace_extension(".bin");
  const Eigen::Index n = size();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(4 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) flat.push_back(points_(i, k));
  }
  for (bool b : inside_) flat.push_back(b ? 1.0 : 0.0);
  write_json(manifest_path, {{"format", "nparts-occupancy"},
                             {"dtype", "float64-le"},
                             {"pool_size", n},
                             {"inside_count", inside_count()},
                             {"blob", blob.filename().string()},
                             {"entries",
                              {{{"name", "points"}, {"shape", {n, 3}}, {"offset", 0}},
                               {{"name", "labels"},
                                {"shape", {n, 1}},
                                {"offset", 3 * n * 8}}}}});
  write_blob(blob, flat);
}

OccupancyPool OccupancyPool::load(const std::filesystem::path& manifest_path) {
  const auto manifest = read_json(manifest_path);
  Eigen::Index n = 0;
  std::filesystem::path blob;
  try {
    if (manifest.at("format").get<std::string>() != "nparts-occupancy") {
      throw DataError("not an occupancy cache: " + manifest_path.string());
    }
    n = manifest.at("pool_size").get<Eigen::Index>();
    blob = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed occupancy manifest: ") + e.what());
  }
  const auto flat = read_blob(blob, static_cast<std::size_t>(4 * n));
  Points pts(n, 3);
  std::vector<bool> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pts(i, k) = flat[static_cast<std::size_t>(3 * i + k)];
    labels[static_cast<std::size_t>(i)] = flat[static_cast<std::size_t>(3 * n + i)] != 0.0;
  }
  return OccupancyPool(std::move(pts), std::move(labels));
}

OccupancyPool build_occupancy_pool(const TriMesh& mesh, Eigen::Index pool_size, Rng& rng,
                                   const Box& box) {
  if (pool_size < 2) throw UsageError("occupancy pool needs at least 2 points");
  const InsideTester tester(mesh);
  Points pts = sample_box(box, pool_size, rng);
  auto labels = tester.contains(pts);
  return OccupancyPool(std::move(pts), std::move(labels));
}

Points sample_sphere(Eigen::Index n, double radius, Rng& rng) {
  if (n < 1) throw UsageError("sample_sphere needs n >= 1");
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector3d g;
    double norm = 0.0;
    do {
      g = Eigen::Vector3d(standard_normal(rng), standard_normal(rng), standard_normal(rng));
      norm = g.norm();
    } while (!(norm > 1e-12));
    p.row(i) = (radius / norm * g).transpose();
  }
  return p;
}

SphereTessellation uv_sphere(int n_lat, int n_lon, double radius) {
  if (n_lat < 3 || n_lon < 3) throw UsageError("uv_sphere needs n_lat >= 3 and n_lon >= 3");
  if (!(radius > 0.0)) throw UsageError("uv_sphere needs a positive radius");
  SphereTessellation out{TriMesh{}, n_lat, n_lon, radius};
  const int rings = n_lat - 1;
  const int nv = 2 + rings * n_lon;
  out.mesh.vertices.resize(nv, 3);
  out.mesh.vertices.row(0) << 0.0, 0.0, radius;
  for (int i = 0; i < rings; ++i) {
    const double theta = std::numbers::pi * (i + 1) / n_lat;
    for (int j = 0; j < n_lon; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / n_lon;
      out.mesh.vertices.row(1 + i * n_lon + j) << radius * std::sin(theta) * std::cos(phi),
          radius * std::sin(theta) * std::sin(phi), radius * std::cos(theta);
    }
  }
  out.mesh.vertices.row(nv - 1) << 0.0, 0.0, -radius;

  auto ring = [&](int i, int j) { return 1 + i * n_lon + (j % n_lon); };
  std::vector<std::array<int, 3>> faces;
  for (int j = 0; j < n_lon; ++j) faces.push_back({0, ring(0, j), ring(0, j + 1)});
  for (int i = 0; i + 1 < rings; ++i) {
    for (int j = 0; j < n_lon; ++j) {
      const int a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j), d = ring(i + 1, j + 1);
      faces.push_back({a, c, d});
      faces.push_back({a, d, b});
    }
  }
  for (int j = 0; j < n_lon; ++j) faces.push_back({nv - 1, ring(rings - 1, j + 1), ring(rings - 1, j)});
  out.mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) out.mesh.faces(static_cast<Eigen::Index>(f), k) = faces[f][k];
  }
  return out;
}

}  // namespace nparts
