// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "nparts/errors.hpp"
#include "nparts/fixtures.hpp"
#include "nparts/losses.hpp"
#include "nparts/metrics.hpp"
#include "support.hpp"

using namespace nparts;
using test::identity_parameters;
using test::random_points;
using test::scaled_primitive;
using test::TempDir;
using test::tiny_homeo;

namespace {

double brute_chamfer(const Points& x, const Points& y) {
  auto one_way = [](const Points& a, const Points& b) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).norm());
      total += best;
    }
    return total / static_cast<double>(a.rows());
  };
  return one_way(x, y) + one_way(y, x);
}

InsideFn cube_inside(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  return [lo, hi](const Points& p) {
    std::vector<bool> in(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const Eigen::Vector3d x = p.row(i).transpose();
      in[static_cast<std::size_t>(i)] = (x.array() > lo.array()).all() && (x.array() < hi.array()).all();
    }
    return in;
  };
}

Points translated(Points p, double dx) {
  p.col(0).array() += dx;
  return p;
}

}  // namespace

TEST_CASE("unit cubes offset by half an edge overlap by one third") {
  const InsideTester a(box_mesh({0, 0, 0}, {1, 1, 1}));
  const InsideTester b(box_mesh({0.5, 0, 0}, {1.5, 1, 1}));
  Box box;
  box.lo = {0, 0, 0};
  box.hi = {1.5, 1, 1};
  Rng rng(3);
  CHECK(std::abs(iou(mesh_inside(a), mesh_inside(b), 100000, rng, box) - 1.0 / 3.0) < 0.01);
}

TEST_CASE("disjoint shapes have zero IoU") {
  Rng rng(4);
  CHECK(iou(cube_inside({-0.5, -0.5, -0.5}, {-0.1, 0.5, 0.5}), cube_inside({0.1, -0.5, -0.5}, {0.5, 0.5, 0.5}),
            20000, rng) == 0.0);
}

TEST_CASE("empty union is an error") {
  CHECK_THROWS_AS(iou_from_labels({false, false}, {false, false}), DataError);
  CHECK_THROWS_AS(iou_from_labels({}, {}), DataError);
  CHECK(iou_from_labels({true, false, true}, {true, true, false}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("IoU is symmetric and stable across seeds") {
  const auto a = cube_inside({-0.4, -0.4, -0.4}, {0.2, 0.3, 0.1});
  const auto b = cube_inside({-0.1, -0.3, -0.2}, {0.4, 0.4, 0.4});
  Rng r1(11), r2(11);
  CHECK(iou(a, b, 20000, r1) == iou(b, a, 20000, r2));
  // Exact overlap: intersection 0.3*0.6*0.3, union 0.6*0.7*0.5 + 0.5*0.7*0.6 - 0.054.
  const double exact = 0.054 / (0.21 + 0.21 - 0.054);
  const int n = 20000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const double v = iou(a, b, n, rng);
    const double n_union = n * 0.366;
    CHECK(std::abs(v - exact) < 3.0 * std::sqrt(exact * (1 - exact) / n_union));
  }
}

TEST_CASE("chamfer examples") {
  Rng rng(5);
  const Points x = random_points(300, rng);
  CHECK(chamfer_l1(x, x) == 0.0);
  Points a(1, 3), b(1, 3);
  a << 0, 0, 0;
  b << 1, 0, 0;
  CHECK(chamfer_l1(a, b) == doctest::Approx(2.0));
  CHECK_THROWS_AS(chamfer_l1(Points(0, 3), b), UsageError);
}

TEST_CASE("concentric spheres are 0.2 apart") {
  Rng rng(6);
  const Points inner = sample_sphere(20000, 0.3, rng);
  const Points outer = sample_sphere(20000, 0.4, rng);
  CHECK(chamfer_l1(inner, outer) == doctest::Approx(0.2).epsilon(0.01));
}

TEST_CASE("chamfer matches brute force nearest search") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Points x = random_points(200 + 37 * trial, rng);
    const Points y = random_points(150 + 11 * trial, rng, 0.3);
    CHECK(chamfer_l1(x, y) == doctest::Approx(brute_chamfer(x, y)).epsilon(1e-12));
  }
  Points dup = random_points(50, rng);
  dup.bottomRows(10) = dup.topRows(10);
  CHECK(chamfer_l1(dup, dup) == 0.0);
}

TEST_CASE("chamfer is symmetric and shrinks against a superset") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Points x = random_points(120, rng);
    const Points y = random_points(90, rng, 0.2);
    CHECK(chamfer_l1(x, y) == doctest::Approx(chamfer_l1(y, x)).epsilon(1e-14));
    Points both(x.rows() + y.rows(), 3);
    both << x, y;
    CHECK(chamfer_l1(x, both) <= chamfer_l1(x, y));
  }
}

TEST_CASE("metric and training chamfer agree at zero and rank translations alike") {
  Rng rng(9);
  const Points base = sample_sphere(400, 0.3, rng);
  double prev_metric = -1.0, prev_train = -1.0;
  for (double dx : {0.0, 0.02, 0.05, 0.1, 0.2, 0.4}) {
    const Points moved = translated(base, dx);
    ad::Graph g;
    const double train = loss_rec(g, base, g.constant(moved)).scalar();
    const double metric = chamfer_l1(base, moved);
    if (dx == 0.0) {
      CHECK(train == 0.0);
      CHECK(metric == 0.0);
    } else {
      CHECK(train > prev_train);
      CHECK(metric > prev_metric);
    }
    prev_metric = metric;
    prev_train = train;
  }
}

TEST_CASE("union mesh keeps everything for one primitive and drops a nested one") {
  const SphereTessellation sphere = uv_sphere(12, 16, 0.25);
  {
    const ConditionalHomeomorphism h(tiny_homeo(1, 2), {0, 1});
    const UnionMesh u = union_mesh(h, identity_parameters(h), sphere);
    CHECK(u.mesh.faces.rows() == sphere.mesh.faces.rows());
    CHECK(u.retained_area[0] == doctest::Approx(u.total_area[0]));
  }
  {
    const ConditionalHomeomorphism h(tiny_homeo(2, 3), {0, 1, 2});
    const ParameterStore p = scaled_primitive(h, 1, 0.8);
    const UnionMesh u = union_mesh(h, p, sphere);
    CHECK(u.retained_area[1] == 0.0);
    CHECK(u.retained_area[0] == doctest::Approx(u.total_area[0]));
    for (int m : u.primitive) CHECK(m == 0);
  }
}

TEST_CASE("identity primitive against its own sphere") {
  const ConditionalHomeomorphism h(tiny_homeo(1, 2), {0, 1});
  const ParameterStore p = identity_parameters(h);
  EvalConfig ec;
  ec.iou_samples = 40000;
  ec.chamfer_samples = 4000;
  const EvalReport r = evaluate(h, p, uv_sphere(64, 128, h.radius()).mesh, ec);
  CHECK(r.iou == doctest::Approx(1.0).epsilon(0.01));
  CHECK(r.chamfer_l1 < 0.03);
  REQUIRE(r.retention.size() == 1);
  CHECK(r.retention[0] == doctest::Approx(1.0));
  CHECK(r.multi_containment == 0.0);
  CHECK(std::isfinite(r.chamfer_l1));
}

TEST_CASE("identity primitive against a distant target") {
  const ConditionalHomeomorphism h(tiny_homeo(1, 2), {0, 1});
  TriMesh far = uv_sphere(16, 32, 0.08).mesh;
  far.vertices.rowwise() += Eigen::RowVector3d(0.4, 0.4, 0.4);
  EvalConfig ec;
  ec.iou_samples = 20000;
  ec.chamfer_samples = 2000;
  const EvalReport r = evaluate(h, identity_parameters(h), far, ec);
  CHECK(r.iou == 0.0);
  CHECK(r.chamfer_l1 > 0.3);
}

TEST_CASE("evaluation is deterministic and fully populated") {
  const ConditionalHomeomorphism h(tiny_homeo(2, 2), {0, 1});
  Rng rng(12);
  const ParameterStore p = test::random_parameters(h, rng, 0.05);
  const TriMesh target = normalize_mesh(capsule_fixture()).mesh;
  EvalConfig ec;
  ec.iou_samples = 10000;
  ec.chamfer_samples = 1000;
  ec.lat = 16;
  ec.lon = 16;
  ec.seed = 3;
  const EvalReport a = evaluate(h, p, target, ec);
  const EvalReport b = evaluate(h, p, target, ec);
  CHECK(to_json(a) == to_json(b));
  CHECK(a.retention.size() == 2);
  CHECK(a.retained_area.size() == 2);
  for (double f : a.retention) CHECK((f >= 0.0 && f <= 1.0));
  CHECK((a.iou >= 0.0 && a.iou <= 1.0));
  CHECK((a.multi_containment >= 0.0 && a.multi_containment <= 1.0));
  CHECK(std::isfinite(a.chamfer_l1));
}

TEST_CASE("csv summary writes its header once") {
  TempDir dir("csv");
  EvalReport r;
  r.iou = 0.5;
  r.chamfer_l1 = 0.25;
  r.multi_containment = 0.125;
  append_csv(dir / "s.csv", "a.obj", 2, r);
  append_csv(dir / "s.csv", "b.obj", 3, r);
  std::ifstream in(dir / "s.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "mesh,M,iou,chamfer_l1,multi_containment");
  CHECK(lines[1].rfind("a.obj,2,", 0) == 0);
  CHECK(lines[2].rfind("b.obj,3,", 0) == 0);
}
