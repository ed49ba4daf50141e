// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nparts/geometry.hpp"
#include "nparts/homeo.hpp"
#include "nparts/parameter_store.hpp"
#include "nparts/rng.hpp"

namespace nparts {

/// Inside/outside classifier over a batch of points.
using InsideFn = std::function<std::vector<bool>(const Points&)>;

/// |A and B| / |A or B| over two label vectors. Throws DataError when the
/// union is empty.
double iou_from_labels(const std::vector<bool>& a, const std::vector<bool>& b);

/// Monte-Carlo volumetric IoU over `n` uniform samples of `box`.
double iou(const InsideFn& a, const InsideFn& b, Eigen::Index n, Rng& rng, const Box& box = Box{});

/// Inside test of the primitive assembly: G(x) < 0.
InsideFn union_inside(const ConditionalHomeomorphism& h, const ParameterStore& p);
InsideFn mesh_inside(const InsideTester& tester);

/// Mean nearest (unsquared) distance from X to Y plus from Y to X.
double chamfer_l1(const Points& x, const Points& y);

/// Union mesh of the primitive assembly: primitive meshes from `sphere`,
/// keeping a face of primitive m iff its centroid lies outside every other
/// primitive up to `eps`. A facet's centroid sits inside its own smooth
/// primitive by the chord sagitta, so only the others take part.
struct UnionMesh {
  TriMesh mesh;
  /// Owning primitive of each kept face.
  std::vector<int> primitive;
  /// Per primitive: retained face area and total face area.
  std::vector<double> retained_area;
  std::vector<double> total_area;
};

UnionMesh union_mesh(const ConditionalHomeomorphism& h, const ParameterStore& p,
                     const SphereTessellation& sphere, double eps = kSurfaceEpsilon);

struct EvalConfig {
  int iou_samples = 100000;
  int chamfer_samples = 10000;
  int lat = 64;
  int lon = 64;
  std::uint64_t seed = 0;
  Box box;
};

struct EvalReport {
  double iou = 0.0;
  double chamfer_l1 = 0.0;
  /// Retained share of each primitive's surface area, in [0, 1].
  std::vector<double> retention;
  std::vector<double> retained_area;
  /// Share of target-interior samples inside two or more primitives.
  double multi_containment = 0.0;
};

nlohmann::json to_json(const EvalReport& r);
std::string csv_header();
std::string csv_row(const std::string& mesh, int primitives, const EvalReport& r);
/// Appends a row, writing the header first when the file is new or empty.
void append_csv(const std::filesystem::path& path, const std::string& mesh, int primitives,
                const EvalReport& r);

/// Metrics of the assembly against a normalized, watertight target.
EvalReport evaluate(const ConditionalHomeomorphism& h, const ParameterStore& p,
                    const TriMesh& target, const EvalConfig& config = {});

}  // namespace nparts
