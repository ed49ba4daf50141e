// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "nparts/trainer.hpp"

namespace nparts {

/// Full run configuration: the fit itself plus data preparation, export and
/// evaluation settings. Structured text is JSON; unknown keys are rejected.
struct RunConfig {
  FitConfig fit;
  int pool_size = 100000;
  double normalize_extent = 0.9;
  int export_lat = 64;
  int export_lon = 64;
  int iou_samples = 100000;
  int chamfer_samples = 10000;
  /// Tessellation used to extract primitive meshes for Chamfer evaluation.
  int eval_lat = 64;
  int eval_lon = 64;
  std::string mesh;
  std::string out;
  std::string occupancy_cache;

  void validate() const;
};

/// Paper-scale defaults: hidden 256, embedding 512, features 128, lr 1e-4,
/// 2000 / 5000 / 200 samples per step.
RunConfig paper_config();
/// Desk-scale defaults: same structure at hidden 64, embedding 64, features
/// 64, with smaller per-step batches.
RunConfig desk_config();

nlohmann::json to_json(const RunConfig& c);
/// Overlays `j` on `base`; throws UsageError on unknown keys or wrong types.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = paper_config());
/// Strict parse of a full FitConfig echo (every key optional, none unknown).
FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig base = {});

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = paper_config());

}  // namespace nparts
