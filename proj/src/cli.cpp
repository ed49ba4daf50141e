// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nparts/blob_io.hpp"
#include "nparts/config.hpp"
#include "nparts/errors.hpp"
#include "nparts/fixtures.hpp"
#include "nparts/geometry.hpp"
#include "nparts/metrics.hpp"
#include "nparts/trainer.hpp"

namespace nparts {

namespace {

namespace fs = std::filesystem;

std::pair<int, int> parse_resolution(const std::string& text) {
  int lat = 0, lon = 0;
  char sep = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &lat, &sep, &lon, &extra) != 3 || (sep != 'x' && sep != 'X')) {
    throw UsageError("invalid resolution '" + text + "' (expected LATxLON)");
  }
  if (lat < 3 || lon < 3) throw UsageError("invalid resolution '" + text + "' (minimum 3x3)");
  return {lat, lon};
}

TriMesh load_target(const std::string& path, double extent) {
  if (!fs::exists(path)) throw DataError("mesh not found: " + path);
  return normalize_mesh(load_obj(path), extent).mesh;
}

OccupancyPool make_pool(const TriMesh& mesh, int size, std::uint64_t seed) {
  Rng rng(seed);
  return build_occupancy_pool(mesh, size, rng);
}

struct FitArgs {
  std::string mesh, config, out, preset = "paper", resume;
  int primitives = 1;
  int iters = 1000;
  std::uint64_t seed = 0;
  CLI::Option* primitives_opt = nullptr;
  CLI::Option* iters_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void cmd_fit(const FitArgs& a, std::ostream& out) {
  if (a.preset != "paper" && a.preset != "desk") throw UsageError("--preset must be 'paper' or 'desk'");
  RunConfig cfg = a.preset == "desk" ? desk_config() : paper_config();
  if (!a.config.empty()) cfg = load_run_config(a.config, cfg);
  if (!a.mesh.empty()) cfg.mesh = a.mesh;
  if (!a.out.empty()) cfg.out = a.out;
  if (a.primitives_opt->count()) cfg.fit.homeo.primitives = a.primitives;
  if (a.iters_opt->count()) cfg.fit.iterations = a.iters;
  if (a.seed_opt->count()) cfg.fit.seed = a.seed;
  if (cfg.mesh.empty()) throw UsageError("fit: --mesh is required");
  if (cfg.out.empty()) throw UsageError("fit: --out is required");
  cfg.validate();

  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    check_compatible(*resumed, cfg.fit);
    resumed->config.iterations = cfg.fit.iterations;
  }

  const TriMesh mesh = load_target(cfg.mesh, cfg.normalize_extent);
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  const fs::path cache = cfg.occupancy_cache.empty() ? dir / "occupancy.json" : fs::path(cfg.occupancy_cache);
  const OccupancyPool pool = !cfg.occupancy_cache.empty() && fs::exists(cache)
                                 ? OccupancyPool::load(cache)
                                 : make_pool(mesh, cfg.pool_size, cfg.fit.seed);
  if (!fs::exists(cache)) pool.save(cache);
  write_json(dir / "config.json", to_json(cfg));

  Fitter fitter = resumed ? Fitter(mesh, pool, std::move(*resumed)) : Fitter(mesh, pool, cfg.fit);
  std::ofstream log(dir / "fit_log.jsonl", resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + (dir / "fit_log.jsonl").string());
  Fitter::RunOptions options;
  options.checkpoint_dir = dir / "checkpoint";
  options.on_step = [&](std::int64_t step, const LossBreakdown& b) {
    log << log_record(step, b) << '\n';
    if (step % 100 == 0) out << "step " << step << " loss " << b.total << '\n';
  };
  fitter.run(options);
  out << "checkpoint written to " << (dir / "checkpoint").string() << '\n';
}

struct EvalArgs {
  std::string mesh, checkpoint, csv, report, resolution = "64x64";
  int samples = 100000;
  int chamfer_samples = 10000;
  double extent = 0.9;
  std::uint64_t seed = 0;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto [lat, lon] = parse_resolution(a.resolution);
  if (a.samples < 1 || a.chamfer_samples < 1) throw UsageError("sample counts must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ConditionalHomeomorphism model = model_of(ckpt);
  const TriMesh mesh = load_target(a.mesh, a.extent);
  EvalConfig ec;
  ec.iou_samples = a.samples;
  ec.chamfer_samples = a.chamfer_samples;
  ec.lat = lat;
  ec.lon = lon;
  ec.seed = a.seed;
  const EvalReport report = evaluate(model, ckpt.state.params, mesh, ec);
  out << to_json(report).dump(2) << '\n';
  const fs::path csv = a.csv.empty() ? fs::path(a.checkpoint).parent_path() / "eval_summary.csv" : fs::path(a.csv);
  append_csv(csv, a.mesh, model.primitives(), report);
  if (!a.report.empty()) write_json(a.report, to_json(report));
}

struct ExportArgs {
  std::string checkpoint, out, resolution = "64x64";
  bool with_union = false;
};

void cmd_export(const ExportArgs& a, std::ostream& out) {
  const auto [lat, lon] = parse_resolution(a.resolution);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ConditionalHomeomorphism model = model_of(ckpt);
  const SphereTessellation sphere = uv_sphere(lat, lon, model.radius());
  fs::create_directories(a.out);
  for (int m = 0; m < model.primitives(); ++m) {
    char name[32];
    std::snprintf(name, sizeof(name), "primitive_%02d.obj", m);
    save_obj(fs::path(a.out) / name, primitive_mesh(model, ckpt.state.params, sphere, m));
  }
  if (a.with_union) {
    save_obj(fs::path(a.out) / "union.obj", union_mesh(model, ckpt.state.params, sphere).mesh);
  }
  out << "exported " << model.primitives() << " primitive(s) to " << a.out << '\n';
}

struct PrepareArgs {
  std::string mesh, out;
  int pool = 100000;
  double extent = 0.9;
  std::uint64_t seed = 0;
};

void cmd_prepare(const PrepareArgs& a, std::ostream& out) {
  if (a.pool < 2) throw UsageError("--pool must be >= 2");
  const TriMesh mesh = load_target(a.mesh, a.extent);
  const OccupancyPool pool = make_pool(mesh, a.pool, a.seed);
  const fs::path path = a.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  pool.save(path);
  out << "occupancy pool: " << pool.size() << " points, inside fraction " << pool.inside_fraction()
      << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fit neural parts to a watertight mesh"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit primitives to a mesh");
  fit_cmd->add_option("--mesh", fit.mesh, "Target mesh (OBJ)");
  fit.primitives_opt = fit_cmd->add_option("--primitives", fit.primitives, "Primitive count M")->capture_default_str();
  fit.iters_opt = fit_cmd->add_option("--iters", fit.iters, "Optimizer steps")->capture_default_str();
  fit_cmd->add_option("--config", fit.config, "JSON run config overlay");
  fit_cmd->add_option("--out", fit.out, "Output directory");
  fit.seed_opt = fit_cmd->add_option("--seed", fit.seed, "Run seed")->capture_default_str();
  fit_cmd->add_option("--preset", fit.preset, "Base config: paper or desk")->capture_default_str();
  fit_cmd->add_option("--resume", fit.resume, "Checkpoint directory to continue from");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against a mesh");
  eval_cmd->add_option("--mesh", ev.mesh, "Target mesh (OBJ)")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--samples", ev.samples, "IoU volume samples")->capture_default_str();
  eval_cmd->add_option("--chamfer-samples", ev.chamfer_samples, "Chamfer surface samples per side")
      ->capture_default_str();
  eval_cmd->add_option("--resolution", ev.resolution, "Primitive tessellation LATxLON")->capture_default_str();
  eval_cmd->add_option("--extent", ev.extent, "Normalized mesh extent")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Evaluation seed")->capture_default_str();
  eval_cmd->add_option("--csv", ev.csv, "CSV summary (default: eval_summary.csv next to the checkpoint)");
  eval_cmd->add_option("--report", ev.report, "Also write the report as JSON");

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export", "Write primitive meshes as OBJ");
  export_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint directory")->required();
  export_cmd->add_option("--resolution", ex.resolution, "Sphere tessellation LATxLON")->capture_default_str();
  export_cmd->add_option("--out", ex.out, "Output directory")->required();
  export_cmd->add_flag("--union", ex.with_union, "Also write union.obj without interior faces");

  PrepareArgs pr;
  auto* prepare_cmd = app.add_subcommand("prepare", "Build the occupancy pool cache");
  prepare_cmd->add_option("--mesh", pr.mesh, "Target mesh (OBJ)")->required();
  prepare_cmd->add_option("--pool", pr.pool, "Pool size")->capture_default_str();
  prepare_cmd->add_option("--out", pr.out, "Cache manifest path (.json)")->required();
  prepare_cmd->add_option("--extent", pr.extent, "Normalized mesh extent")->capture_default_str();
  prepare_cmd->add_option("--seed", pr.seed, "Sampling seed")->capture_default_str();

  std::string fixtures_dir = "fixtures";
  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write the bundled analytic meshes");
  fixtures_cmd->add_option("--out", fixtures_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (fit_cmd->parsed()) cmd_fit(fit, out);
    if (eval_cmd->parsed()) cmd_eval(ev, out);
    if (export_cmd->parsed()) cmd_export(ex, out);
    if (prepare_cmd->parsed()) cmd_prepare(pr, out);
    if (fixtures_cmd->parsed()) {
      for (const auto& name : fixture_names()) out << ensure_fixture(fixtures_dir, name).string() << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}

}  // namespace nparts
