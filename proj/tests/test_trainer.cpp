// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "nparts/blob_io.hpp"
#include "nparts/errors.hpp"
#include "nparts/fixtures.hpp"
#include "nparts/trainer.hpp"
#include "support.hpp"

using namespace nparts;
using test::TempDir;
using test::tiny_homeo;

namespace {

FitConfig tiny_fit(int primitives = 2, std::uint64_t seed = 5) {
  FitConfig c;
  c.homeo = tiny_homeo(primitives, 3);
  c.hyper.k_cover = 4;
  c.learning_rate = 1e-3;
  c.surface_batch = 16;
  c.occupancy_batch = 32;
  c.sphere_batch = 16;
  c.iterations = 10;
  c.seed = seed;
  return c;
}

struct Scene {
  TriMesh mesh = normalize_mesh(sphere_fixture()).mesh;
  OccupancyPool pool = [this] {
    Rng rng(1);
    return build_occupancy_pool(mesh, 2000, rng);
  }();
};

const Scene& scene() {
  static const Scene s;
  return s;
}

bool same_bits(const ParameterStore& a, const ParameterStore& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entry(i).data != b.entry(i).data) return false;
  }
  return true;
}

FitState state_with(const ParameterStore& params) {
  FitState s;
  s.params = params;
  s.adam_m = params.zeros_like();
  s.adam_v = params.zeros_like();
  return s;
}

TrainingBatch concat(const std::vector<TrainingBatch>& parts) {
  TrainingBatch out;
  Eigen::Index ns = 0, no = 0;
  for (const auto& p : parts) {
    ns += p.surface.points.rows();
    no += p.occupancy.size();
  }
  out.surface.points.resize(ns, 3);
  out.surface.normals.resize(ns, 3);
  out.occupancy.points.resize(no, 3);
  out.occupancy.weights.resize(no);
  out.sphere.resize(parts.front().sphere.size());
  Eigen::Index is = 0, io = 0;
  for (const auto& p : parts) {
    out.surface.points.middleRows(is, p.surface.points.rows()) = p.surface.points;
    out.surface.normals.middleRows(is, p.surface.points.rows()) = p.surface.normals;
    out.surface.faces.insert(out.surface.faces.end(), p.surface.faces.begin(), p.surface.faces.end());
    is += p.surface.points.rows();
    out.occupancy.points.middleRows(io, p.occupancy.size()) = p.occupancy.points;
    out.occupancy.weights.segment(io, p.occupancy.size()) = p.occupancy.weights;
    out.occupancy.inside.insert(out.occupancy.inside.end(), p.occupancy.inside.begin(), p.occupancy.inside.end());
    io += p.occupancy.size();
    for (std::size_t m = 0; m < p.sphere.size(); ++m) {
      Points& s = out.sphere[m];
      const Eigen::Index old = s.rows();
      s.conservativeResize(old + p.sphere[m].rows(), 3);
      s.bottomRows(p.sphere[m].rows()) = p.sphere[m];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  ParameterStore p;
  p.add("w", 2, 3);
  p.data(0) << 1, -2, 3, -4, 5, -6;
  FitState s = state_with(p);
  adam_step(s, p.zeros_like(), 1e-3);
  CHECK(same_bits(s.params, p));
  CHECK(s.step == 1);
}

TEST_CASE("first Adam step moves each coordinate by about lr") {
  ParameterStore p;
  p.add("w", 1, 4);
  p.data(0) << 0.5, -0.5, 2.0, 0.0;
  FitState s = state_with(p);
  ParameterStore g = p.zeros_like();
  g.data(0) << 3.0, -0.2, 1e-3, 40.0;
  adam_step(s, g, 1e-2);
  const Eigen::VectorXd delta = s.params.entry(0).data - p.entry(0).data;
  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(std::abs(delta(k)) == doctest::Approx(1e-2).epsilon(1e-4));
    CHECK(delta(k) * g.entry(0).data(k) < 0.0);
  }
}

TEST_CASE("non-finite gradient names the parameter and touches nothing") {
  ParameterStore p;
  p.add("a", 1, 2);
  p.add("b", 1, 2);
  FitState s = state_with(p);
  ParameterStore g = p.zeros_like();
  g.data(0) << 1.0, 1.0;
  g.data(1)(1) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(s, g, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(s.step == 0);
  CHECK(same_bits(s.params, p));
  CHECK(s.adam_m.entry(0).data.isZero(0.0));
}

TEST_CASE("fit config validation") {
  FitConfig c = tiny_fit();
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = tiny_fit();
  c.sphere_batch = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = tiny_fit();
  c.occupancy_batch = 6;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("zero iterations yields the initialization") {
  FitConfig c = tiny_fit();
  c.iterations = 0;
  TempDir dir("zero");
  Fitter f(scene().mesh, scene().pool, c);
  Fitter::RunOptions o;
  o.checkpoint_dir = dir / "ckpt";
  f.run(o);
  const Checkpoint loaded = load_checkpoint(dir / "ckpt");
  const Checkpoint init = initial_checkpoint(c);
  CHECK(loaded.state.step == 0);
  CHECK(same_bits(loaded.state.params, init.state.params));
  const ConditionalHomeomorphism h = model_of(loaded);
  Rng rng(2);
  const Points y = sample_sphere(50, h.radius(), rng);
  for (int m = 0; m < h.primitives(); ++m) CHECK((h.forward(loaded.state.params, y, m) - y).norm() == 0.0);
}

TEST_CASE("same seed gives bit-identical parameters after 100 steps") {
  FitConfig c = tiny_fit(2, 9);
  c.iterations = 100;
  Fitter a(scene().mesh, scene().pool, c);
  Fitter b(scene().mesh, scene().pool, c);
  a.run({});
  b.run({});
  CHECK(a.state().step == 100);
  CHECK(same_bits(a.state().params, b.state().params));
  CHECK(same_bits(a.state().adam_v, b.state().adam_v));
  c.seed = 10;
  Fitter other(scene().mesh, scene().pool, c);
  other.run({});
  CHECK_FALSE(same_bits(a.state().params, other.state().params));
}

TEST_CASE("resuming matches an uninterrupted run") {
  TempDir dir("resume");
  FitConfig c = tiny_fit(2, 3);
  c.iterations = 12;
  Fitter whole(scene().mesh, scene().pool, c);
  whole.run({});

  c.iterations = 5;
  Fitter first(scene().mesh, scene().pool, c);
  Fitter::RunOptions o;
  o.checkpoint_dir = dir / "ckpt";
  first.run(o);
  Checkpoint ck = load_checkpoint(dir / "ckpt");
  CHECK(ck.state.step == 5);
  ck.config.iterations = 12;
  Fitter second(scene().mesh, scene().pool, std::move(ck));
  second.run({});
  CHECK(same_bits(whole.state().params, second.state().params));
  CHECK(same_bits(whole.state().adam_m, second.state().adam_m));
  CHECK(whole.state().last_loss.total == second.state().last_loss.total);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir dir("roundtrip");
  FitConfig c = tiny_fit(3, 4);
  c.iterations = 3;
  Fitter f(scene().mesh, scene().pool, c);
  f.run({});
  save_checkpoint(dir / "ckpt", f.checkpoint());
  const Checkpoint back = load_checkpoint(dir / "ckpt");
  CHECK(same_bits(back.state.params, f.state().params));
  CHECK(same_bits(back.state.adam_m, f.state().adam_m));
  CHECK(same_bits(back.state.adam_v, f.state().adam_v));
  CHECK(back.state.step == 3);
  CHECK(back.schedule == f.model().schedule());
  CHECK(back.state.rng == f.state().rng);
  CHECK(to_json(back.config) == to_json(f.config()));
  CHECK(std::filesystem::exists(dir / "ckpt" / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "ckpt" / "params.bin"));
  CHECK(std::filesystem::exists(dir / "ckpt" / "adam.bin"));
}

TEST_CASE("truncated or missing blobs are rejected") {
  TempDir dir("trunc");
  save_checkpoint(dir / "ckpt", initial_checkpoint(tiny_fit()));
  const auto blob = dir / "ckpt" / "params.bin";
  std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 8);
  CHECK_THROWS_AS(load_checkpoint(dir / "ckpt"), DataError);
  save_checkpoint(dir / "ckpt2", initial_checkpoint(tiny_fit()));
  std::filesystem::remove(dir / "ckpt2" / "adam.bin");
  CHECK_THROWS_AS(load_checkpoint(dir / "ckpt2"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent"), DataError);
}

TEST_CASE("primitive count mismatch is a compatibility error") {
  const Checkpoint five = initial_checkpoint(tiny_fit(5));
  CHECK_THROWS_AS(check_compatible(five, tiny_fit(3)), UsageError);
  CHECK_NOTHROW(check_compatible(five, tiny_fit(5)));
}

TEST_CASE("accumulated gradient equals the gradient of the concatenated batch") {
  FitConfig c = tiny_fit(2, 8);
  c.weights.rec = 0.0;
  c.weights.cover = 0.0;
  Fitter f(scene().mesh, scene().pool, c);
  for (int i = 0; i < 3; ++i) f.step();
  std::vector<TrainingBatch> parts;
  for (int a = 0; a < 4; ++a) parts.push_back(f.draw_batch());
  const auto [accumulated, mean] = f.gradient(parts);
  const auto [joined, whole] = f.gradient({concat(parts)});
  for (std::size_t i = 0; i < accumulated.size(); ++i) {
    const double scale = std::max(1.0, joined.entry(i).data.lpNorm<Eigen::Infinity>());
    CHECK((accumulated.entry(i).data - joined.entry(i).data).lpNorm<Eigen::Infinity>() / scale < 1e-10);
  }
  CHECK(mean.total == doctest::Approx(whole.total).epsilon(1e-10));
}

TEST_CASE("log records carry every term") {
  LossBreakdown b{0.5, 0.25, 0.125, 0.0625, 0.03125, 1.0};
  const auto j = nlohmann::json::parse(log_record(7, b));
  CHECK(j.at("step") == 7);
  CHECK(j.at("rec") == 0.5);
  CHECK(j.at("occ") == 0.25);
  CHECK(j.at("norm") == 0.125);
  CHECK(j.at("overlap") == 0.0625);
  CHECK(j.at("cover") == 0.03125);
  CHECK(j.at("total") == 1.0);
}
