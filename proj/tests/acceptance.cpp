// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance runs. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
//
//   nparts_acceptance [--work DIR] [--only 1,2,...] [--reuse]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "nparts/cli.hpp"
#include "nparts/config.hpp"
#include "nparts/fixtures.hpp"
#include "nparts/metrics.hpp"
#include "nparts/trainer.hpp"
#include "support.hpp"

using namespace nparts;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Runs {
 public:
  Runs(fs::path work, bool reuse) : work_(std::move(work)) {
    if (!reuse) fs::remove_all(work_);
    fs::create_directories(work_ / "fixtures");
    for (const auto& name : fixture_names()) ensure_fixture(work_ / "fixtures", name);
  }

  fs::path mesh(const std::string& name) const { return work_ / "fixtures" / (name + ".obj"); }

  struct Fit {
    fs::path dir;
    double cpu = 0.0;
    double wall = 0.0;
  };

  /// Desk-preset fit through the command-line entry point. A finished run
  /// with the same name in the work directory is reused.
  Fit fit(const std::string& name, const std::string& mesh_name, int primitives, std::uint64_t seed,
          const nlohmann::json& overlay = nlohmann::json::object()) {
    Fit f;
    f.dir = work_ / name;
    const fs::path timing = f.dir / "timing.json";
    if (fs::exists(timing)) {
      const auto t = nlohmann::json::parse(slurp(timing));
      f.cpu = t.at("cpu");
      f.wall = t.at("wall");
      return f;
    }
    fs::remove_all(f.dir);
    fs::create_directories(f.dir);
    std::ofstream(f.dir / "overlay.json") << overlay.dump(2);
    const std::vector<std::string> args = {"nparts",    "fit",       "--preset",
                                           "desk",      "--mesh",    mesh(mesh_name).string(),
                                           "--config",  (f.dir / "overlay.json").string(),
                                           "--primitives", std::to_string(primitives),
                                           "--iters",   "2000",
                                           "--seed",    std::to_string(seed),
                                           "--out",     f.dir.string()};
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const double c0 = cpu_seconds();
    const auto w0 = std::chrono::steady_clock::now();
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    f.cpu = cpu_seconds() - c0;
    f.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - w0).count();
    if (code != 0) throw std::runtime_error("fit " + name + " failed: " + err.str());
    std::ofstream(timing) << nlohmann::json{{"cpu", f.cpu}, {"wall", f.wall}}.dump();
    return f;
  }

  EvalReport evaluate_run(const Fit& f, const std::string& mesh_name, int chamfer_samples = 10000) const {
    const Checkpoint ckpt = load_checkpoint(f.dir / "checkpoint");
    const TriMesh target = normalize_mesh(load_obj(mesh(mesh_name))).mesh;
    EvalConfig ec;
    ec.chamfer_samples = chamfer_samples;
    return evaluate(model_of(ckpt), ckpt.state.params, target, ec);
  }

 private:
  fs::path work_;
};

double max_round_trip(const ConditionalHomeomorphism& h, const ParameterStore& p, const Points& x) {
  double worst = 0.0;
  for (int m = 0; m < h.primitives(); ++m) {
    worst = std::max(worst, (h.inverse(p, h.forward(p, x, m), m) - x).cwiseAbs().maxCoeff());
    worst = std::max(worst, (h.forward(p, h.inverse(p, x, m), m) - x).cwiseAbs().maxCoeff());
  }
  return worst;
}

HomeoConfig desk_homeo(int primitives, int layers) {
  HomeoConfig c = desk_config().fit.homeo;
  c.primitives = primitives;
  c.layers = layers;
  return c;
}

Verdict inverse_consistency() {
  const auto w0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const ConditionalHomeomorphism h(desk_homeo(2, 4), draw_split_schedule(4, rng));
    const ParameterStore p = test::random_parameters(h, rng, 0.1);
    worst = std::max(worst, max_round_trip(h, p, test::random_points(1000, rng)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - w0).count();
  return {worst < 1e-9 && secs < 5.0, "max round-trip error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Verdict identity_at_init() {
  const Checkpoint init = initial_checkpoint(desk_config().fit);
  const ConditionalHomeomorphism h = model_of(init);
  Rng rng(102);
  const Points x = test::random_points(1000, rng);
  bool exact = true;
  for (int m = 0; m < h.primitives(); ++m) exact = exact && (h.forward(init.state.params, x, m).array() == x.array()).all();
  const SphereTessellation sphere = uv_sphere(64, 64, h.radius());
  const TriMesh mesh = primitive_mesh(h, init.state.params, sphere, 0);
  const bool same_mesh = mesh.faces == sphere.mesh.faces && (mesh.vertices.array() == sphere.mesh.vertices.array()).all();
  return {exact && same_mesh, std::string("forward exact: ") + (exact ? "yes" : "no") +
                                  ", mesh bit-identical: " + (same_mesh ? "yes" : "no")};
}

Verdict gradient_suite() {
  const auto w0 = std::chrono::steady_clock::now();
  const TriMesh mesh = normalize_mesh(sphere_fixture()).mesh;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ConditionalHomeomorphism h(test::tiny_homeo(2, 2), {0, 1});
    Rng rng(200 + seed);
    const ParameterStore p = test::random_parameters(h, rng, 0.2);
    const OccupancyPool pool = build_occupancy_pool(mesh, 2000, rng);
    TrainingBatch batch;
    batch.surface = SurfaceSampler(mesh).sample(16, rng);
    batch.occupancy = pool.draw_batch(16, rng);
    for (int m = 0; m < 2; ++m) batch.sphere.push_back(sample_sphere(16, h.radius(), rng));
    LossHyper hyper;
    hyper.k_cover = 4;
    const ad::GradFunction f = [&](const Eigen::VectorXd& flat, Eigen::VectorXd* grad) {
      ParameterStore q = p;
      q.assign_flat(std::vector<double>(flat.data(), flat.data() + flat.size()));
      ad::Graph g(&q);
      const LossResult r = loss_total(g, h, q, batch, LossWeights{}, hyper);
      if (grad) {
        const auto fg = g.backward(r.total).flatten();
        *grad = Eigen::Map<const Eigen::VectorXd>(fg.data(), static_cast<Eigen::Index>(fg.size()));
      }
      return r.breakdown.total;
    };
    const auto start = p.flatten();
    worst = std::max(worst, ad::grad_check(f, Eigen::Map<const Eigen::VectorXd>(start.data(),
                                                                                 static_cast<Eigen::Index>(start.size())),
                                           1e-6));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - w0).count();
  return {worst < 1e-4 && secs < 60.0, "max rel error " + fmt("%.3g", worst) + " over 5 draws, " + fmt("%.1f", secs) + " s"};
}

Verdict estimator_oracles() {
  Rng rng(103);
  const InsideTester a(box_mesh({0, 0, 0}, {1, 1, 1}));
  const InsideTester b(box_mesh({0.5, 0, 0}, {1.5, 1, 1}));
  Box box;
  box.lo = {0, 0, 0};
  box.hi = {1.5, 1, 1};
  const double cubes = iou(mesh_inside(a), mesh_inside(b), 100000, rng, box);

  const NormalizedMesh sphere = normalize_mesh(sphere_fixture());
  const double r = 0.35 * sphere.transform.scale;
  const double analytic = 4.0 * std::numbers::pi * r * r * r / 3.0;
  const double fraction = build_occupancy_pool(sphere.mesh, 100000, rng).inside_fraction();

  const double chamfer = chamfer_l1(sample_sphere(10000, 0.3, rng), sample_sphere(10000, 0.4, rng));

  const bool pass = std::abs(cubes - 1.0 / 3.0) <= 0.01 && std::abs(fraction - analytic) <= 0.01 &&
                    std::abs(chamfer - 0.2) <= 0.05 * 0.2;
  return {pass, "cube IoU " + fmt("%.4f", cubes) + ", pool inside " + fmt("%.4f", fraction) + " vs " +
                    fmt("%.4f", analytic) + ", concentric chamfer " + fmt("%.4f", chamfer)};
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "nparts_acceptance").string();
  std::vector<int> only;
  bool reuse = false;
  app.add_option("--work", work, "Directory for fits")->capture_default_str();
  app.add_flag("--reuse", reuse, "Keep finished fits from an earlier invocation");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  Runs runs(work, reuse);
  int failures = 0;
  auto report = [&](int c, const std::function<Verdict()>& body) {
    if (!wanted(c)) return;
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
  };

  report(1, inverse_consistency);
  report(2, identity_at_init);
  report(3, gradient_suite);
  report(4, estimator_oracles);

  report(5, [&] {
    const auto f = runs.fit("sphere_a", "sphere", 1, 1);
    const EvalReport fine = runs.evaluate_run(f, "sphere", 100000);
    const EvalReport coarse = runs.evaluate_run(f, "sphere", 10000);
    const bool pass = fine.iou >= 0.95 && fine.chamfer_l1 <= 0.01 && f.cpu <= 600.0;
    return Verdict{pass, "IoU " + fmt("%.4f", fine.iou) + ", chamfer_l1 " + fmt("%.4f", fine.chamfer_l1) +
                             " (100k/side; 10k/side " + fmt("%.4f", coarse.chamfer_l1) + "), 2000 iters, cpu " +
                             fmt("%.0f", f.cpu) + " s, wall " + fmt("%.0f", f.wall) + " s"};
  });

  report(6, [&] {
    const auto base = runs.fit("dumbbell_s1", "dumbbell", 2, 1);
    const auto free = runs.fit("dumbbell_s1_no_overlap", "dumbbell", 2, 1, {{"weights", {{"overlap", 0.0}}}});
    const EvalReport a = runs.evaluate_run(base, "dumbbell");
    const EvalReport b = runs.evaluate_run(free, "dumbbell");
    const bool pass = a.iou >= 0.85 && a.multi_containment <= 0.05 && b.multi_containment > a.multi_containment &&
                      base.cpu <= 1200.0 && free.cpu <= 1200.0;
    return Verdict{pass, "IoU " + fmt("%.4f", a.iou) + ", multi-containment " + fmt("%.4f", a.multi_containment) +
                             " -> " + fmt("%.4f", b.multi_containment) + " without overlap term, cpu " +
                             fmt("%.0f", base.cpu) + " s / " + fmt("%.0f", free.cpu) + " s"};
  });

  report(7, [&] {
    const auto a = runs.fit("sphere_a", "sphere", 1, 1);
    const auto b = runs.fit("sphere_b", "sphere", 1, 1);
    bool same = true;
    for (const char* file : {"manifest.json", "params.bin", "adam.bin"}) {
      same = same && slurp(a.dir / "checkpoint" / file) == slurp(b.dir / "checkpoint" / file);
    }
    const bool reports = to_json(runs.evaluate_run(a, "sphere")).dump() == to_json(runs.evaluate_run(b, "sphere")).dump();
    return Verdict{same && reports, std::string("checkpoints byte-identical: ") + (same ? "yes" : "no") +
                                        ", reports identical: " + (reports ? "yes" : "no")};
  });

  report(8, [&] {
    auto ratio = [](const EvalReport& r) {
      const auto [lo, hi] = std::minmax_element(r.retained_area.begin(), r.retained_area.end());
      return *hi > 0.0 ? *lo / *hi : 0.0;
    };
    double worst_default = 1.0;
    std::string seeds;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto f = runs.fit("dumbbell_s" + std::to_string(seed), "dumbbell", 2, seed);
      const double r = ratio(runs.evaluate_run(f, "dumbbell"));
      worst_default = std::min(worst_default, r);
      seeds += (seeds.empty() ? "" : " ") + fmt("%.3f", r);
    }
    const auto adv = runs.fit("dumbbell_s1_adversarial", "dumbbell", 2, 1,
                              {{"weights", {{"cover", 0.0}}}, {"embed_init", "duplicate"}});
    const double adv_ratio = ratio(runs.evaluate_run(adv, "dumbbell"));
    return Verdict{worst_default >= 0.01, "retained-area ratio default seeds [" + seeds + "], without cover term " +
                                              "from duplicated embeddings " + fmt("%.4f", adv_ratio) +
                                              (adv_ratio < 0.01 ? " (degenerate)" : " (not degenerate)")};
  });

  return failures == 0 ? 0 : 1;
}
