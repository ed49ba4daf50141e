// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/fixtures.hpp"

#include <cmath>
#include <numbers>

#include "nparts/errors.hpp"

namespace nparts {

namespace {

/// (a, b, c) -> (c, a, b): maps the z axis onto x and keeps orientation.
TriMesh z_to_x(TriMesh mesh) {
  Points v(mesh.vertices.rows(), 3);
  v.col(0) = mesh.vertices.col(2);
  v.col(1) = mesh.vertices.col(0);
  v.col(2) = mesh.vertices.col(1);
  mesh.vertices = std::move(v);
  return mesh;
}

double cap(double r, double d) { return d >= r ? 0.0 : std::sqrt(r * r - d * d); }

}  // namespace

TriMesh revolve(const std::function<double(double)>& radius_at, double half_length, int n_lat,
                int n_lon) {
  // Same topology as the UV sphere, so faces and orientation carry over.
  SphereTessellation t = uv_sphere(n_lat, n_lon, 1.0);
  TriMesh& mesh = t.mesh;
  const Eigen::Index nv = mesh.vertices.rows();
  mesh.vertices.row(0) << 0.0, 0.0, half_length;
  mesh.vertices.row(nv - 1) << 0.0, 0.0, -half_length;
  for (int i = 0; i + 1 < n_lat; ++i) {
    const double z = half_length * std::cos(std::numbers::pi * (i + 1) / n_lat);
    const double rho = radius_at(z);
    if (!(rho > 0.0)) throw UsageError("revolve: profile radius must be positive between the poles");
    for (int j = 0; j < n_lon; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / n_lon;
      mesh.vertices.row(1 + i * n_lon + j) << rho * std::cos(phi), rho * std::sin(phi), z;
    }
  }
  return mesh;
}

TriMesh box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  TriMesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    m.vertices.row(i) << ((i & 1) ? hi.x() : lo.x()), ((i & 2) ? hi.y() : lo.y()),
        ((i & 4) ? hi.z() : lo.z());
  }
  m.faces.resize(12, 3);
  m.faces << 0, 2, 1, 1, 2, 3,  // z = lo
      4, 5, 6, 5, 7, 6,         // z = hi
      0, 1, 4, 1, 5, 4,         // y = lo
      2, 6, 3, 3, 6, 7,         // y = hi
      0, 4, 2, 2, 4, 6,         // x = lo
      1, 3, 5, 3, 7, 5;         // x = hi
  return m;
}

TriMesh sphere_fixture(double radius) { return uv_sphere(64, 128, radius).mesh; }

TriMesh cube_fixture(double edge) {
  return box_mesh(Eigen::Vector3d::Constant(-edge / 2), Eigen::Vector3d::Constant(edge / 2));
}

TriMesh capsule_fixture() {
  constexpr double r = 0.2, h = 0.15;
  auto profile = [](double z) { return std::abs(z) <= h ? r : cap(r, std::abs(z) - h); };
  return z_to_x(revolve(profile, h + r, 64, 64));
}

TriMesh dumbbell_fixture() {
  constexpr double r = 0.25, c = 0.3, neck = 0.14;
  auto profile = [](double z) { return std::max(cap(r, std::abs(std::abs(z) - c)), std::abs(z) < c ? neck : 0.0); };
  return z_to_x(revolve(profile, c + r, 96, 64));
}

std::vector<std::string> fixture_names() { return {"sphere", "cube", "capsule", "dumbbell"}; }

TriMesh fixture(const std::string& name) {
  if (name == "sphere") return sphere_fixture();
  if (name == "cube") return cube_fixture();
  if (name == "capsule") return capsule_fixture();
  if (name == "dumbbell") return dumbbell_fixture();
  throw UsageError("unknown fixture '" + name + "'");
}

std::filesystem::path ensure_fixture(const std::filesystem::path& dir, const std::string& name) {
  const auto path = dir / (name + ".obj");
  if (!std::filesystem::exists(path)) {
    const TriMesh mesh = fixture(name);
    std::filesystem::create_directories(dir);
    save_obj(path, mesh);
  }
  return path;
}

}  // namespace nparts
