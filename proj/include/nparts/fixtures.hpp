// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nparts/geometry.hpp"

namespace nparts {

/// Closed surface of revolution about z. `radius_at(z)` gives the profile
/// radius for z in [-half_length, half_length] and must vanish at both ends.
/// Rings are cosine-spaced in z; the result is watertight and outward-facing.
TriMesh revolve(const std::function<double(double)>& radius_at, double half_length, int n_lat,
                int n_lon);

/// Axis-aligned box with 12 outward-facing triangles.
TriMesh box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

TriMesh sphere_fixture(double radius = 0.35);
TriMesh cube_fixture(double edge = 0.7);
/// Radius 0.2, cylinder half length 0.15, along x.
TriMesh capsule_fixture();
/// Two lobes of radius 0.25 centered at x = -0.3 and x = 0.3, joined by a neck
/// of radius 0.14.
TriMesh dumbbell_fixture();

std::vector<std::string> fixture_names();
TriMesh fixture(const std::string& name);
/// Writes `<dir>/<name>.obj` unless it already exists; returns the path.
std::filesystem::path ensure_fixture(const std::filesystem::path& dir, const std::string& name);

}  // namespace nparts
