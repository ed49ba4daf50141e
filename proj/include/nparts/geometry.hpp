// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "nparts/rng.hpp"

namespace nparts {

/// N x 3 point rows.
using Points = Eigen::MatrixXd;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Indexed triangle mesh with 0-based indices.
struct TriMesh {
  Points vertices = Points(0, 3);
  Faces faces = Faces(0, 3);

  Eigen::Index vertex_count() const { return vertices.rows(); }
  Eigen::Index face_count() const { return faces.rows(); }
  Eigen::Vector3d vertex(Eigen::Index i) const { return vertices.row(i).transpose(); }
  std::array<Eigen::Vector3d, 3> triangle(Eigen::Index f) const;
  double face_area(Eigen::Index f) const;
  /// Unit normal by right-hand rule on the vertex order.
  Eigen::Vector3d face_normal(Eigen::Index f) const;
  double total_area() const;
  /// Counts unique undirected edges.
  Eigen::Index edge_count() const;
  /// V - E + F.
  Eigen::Index euler_characteristic() const;
};

/// Number of undirected edges not shared by exactly two faces. Zero means the
/// mesh is watertight.
Eigen::Index count_non_manifold_edges(const TriMesh& mesh);

/// Reads the OBJ subset: `v x y z` and `f i j k ...` (1-based, optional
/// `/vt/vn` suffixes, negative relative indices). Polygons are
/// fan-triangulated and zero-area triangles dropped.
TriMesh load_obj(const std::filesystem::path& path);
TriMesh parse_obj(const std::string& text);
/// Writes vertices and triangles only.
void save_obj(const std::filesystem::path& path, const TriMesh& mesh);

/// x_normalized = (x - center) * scale.
struct NormalizeTransform {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return (x - center) * scale; }
  Eigen::Vector3d invert(const Eigen::Vector3d& x) const { return x / scale + center; }
};

struct NormalizedMesh {
  TriMesh mesh;
  NormalizeTransform transform;
};

/// Uniform scale and translation placing the bounding box center at the origin
/// with largest extent `target_extent`.
NormalizedMesh normalize_mesh(const TriMesh& mesh, double target_extent = 0.9);

struct SurfaceSamples {
  Points points = Points(0, 3);
  Points normals = Points(0, 3);
  std::vector<Eigen::Index> faces;  // source face per sample
};

/// Area-weighted face choice; samples are drawn with a precomputed CDF.
class SurfaceSampler {
 public:
  explicit SurfaceSampler(const TriMesh& mesh);
  SurfaceSamples sample(Eigen::Index n, Rng& rng) const;
  const TriMesh& mesh() const { return mesh_; }

 private:
  TriMesh mesh_;
  std::vector<double> cdf_;
};

SurfaceSamples sample_surface(const TriMesh& mesh, Eigen::Index n, Rng& rng);

/// Ray-parity containment queries against a watertight mesh.
///
/// Each query casts three rays and takes the majority vote. Base directions are
/// fixed by `seed`; a ray passing within 1e-9 (barycentric) of an edge or
/// vertex is replaced by a fresh direction drawn from a generator seeded by
/// the query point itself, so answers do not depend on query order.
class InsideTester {
 public:
  /// Throws DataError naming the offending edge count if not watertight.
  explicit InsideTester(const TriMesh& mesh, std::uint64_t seed = 0x5eed);
  bool contains(const Eigen::Vector3d& x) const;
  std::vector<bool> contains(const Points& points) const;

 private:
  struct BvhNode {
    Eigen::AlignedBox3d box;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
  };
  enum class RayResult { kCount, kDegenerate };
  int build(int first, int count);
  RayResult cast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, int& hits) const;

  TriMesh mesh_;
  std::vector<int> order_;
  std::vector<BvhNode> nodes_;
  std::array<Eigen::Vector3d, 3> directions_;
  std::uint64_t seed_;
};

inline bool point_in_mesh(const InsideTester& tester, const Eigen::Vector3d& x) {
  return tester.contains(x);
}

/// Axis-aligned sampling box; the default is the normalization cube.
struct Box {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-0.5);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(0.5);
  double volume() const { return (hi - lo).prod(); }
};

Points sample_box(const Box& box, Eigen::Index n, Rng& rng);

/// A label-balanced occupancy batch with importance weights.
struct OccupancySet {
  Points points = Points(0, 3);
  std::vector<bool> inside;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return points.rows(); }
};

/// Precomputed uniform-cube labeled pool from which balanced batches are drawn.
class OccupancyPool {
 public:
  OccupancyPool(Points points, std::vector<bool> inside);

  /// Draws n/2 inside and n - n/2 outside points with replacement. Weights are
  /// 2 * n_label / pool_size, making weighted batch means unbiased for the
  /// uniform pool mean.
  OccupancySet draw_batch(Eigen::Index n, Rng& rng) const;

  const Points& points() const { return points_; }
  const std::vector<bool>& inside() const { return inside_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index inside_count() const { return static_cast<Eigen::Index>(inside_idx_.size()); }
  double inside_fraction() const;
  double weight(bool inside) const;

  /// Cache format: `<path>` manifest (structured text) plus `<path>.bin`
  /// holding the N x 3 points followed by N labels (1.0 / 0.0).
  void save(const std::filesystem::path& manifest_path) const;
  static OccupancyPool load(const std::filesystem::path& manifest_path);

 private:
  Points points_;
  std::vector<bool> inside_;
  std::vector<Eigen::Index> inside_idx_;
  std::vector<Eigen::Index> outside_idx_;
};

/// Labels `pool_size` uniform samples of `box`. Throws DataError if no sample
/// falls inside the mesh.
OccupancyPool build_occupancy_pool(const TriMesh& mesh, Eigen::Index pool_size, Rng& rng,
                                   const Box& box = Box{});

/// Uniform points on the radius-r sphere via normalized isotropic Gaussians.
Points sample_sphere(Eigen::Index n, double radius, Rng& rng);

struct SphereTessellation {
  TriMesh mesh;
  int n_lat = 0;
  int n_lon = 0;
  double radius = 0.0;
};

/// Latitude/longitude sphere: poles are single vertices with triangle fans,
/// n_lat - 1 rings of n_lon vertices between them.
SphereTessellation uv_sphere(int n_lat, int n_lon, double radius);

}  // namespace nparts
