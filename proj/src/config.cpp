// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/config.hpp"

#include <functional>
#include <map>

#include "nparts/blob_io.hpp"
#include "nparts/errors.hpp"

namespace nparts {

namespace {

using Json = nlohmann::json;
using Setter = std::function<void(const Json&)>;

struct WrongType {};

/// Applies each key of `j` through `setters`, rejecting anything unknown.
void overlay(const Json& j, const std::string& where, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw UsageError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
    try {
      it->second(value);
    } catch (const WrongType&) {
      throw UsageError("config: wrong type for '" + (where.empty() ? key : where + "." + key) + "'");
    } catch (const Json::exception&) {
      throw UsageError("config: wrong type for '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <class T>
Setter set(T& field) {
  return [&field](const Json& v) {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw WrongType{};
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw WrongType{};
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw WrongType{};
    } else {
      if (!v.is_string()) throw WrongType{};
    }
    field = v.get<T>();
  };
}

const char* embed_init_name(EmbeddingInit e) {
  return e == EmbeddingInit::kDuplicate ? "duplicate" : "random";
}

}  // namespace

nlohmann::json to_json(const FitConfig& c) {
  return {{"homeo", to_json(c.homeo)},
          {"weights", to_json(c.weights)},
          {"hyper", to_json(c.hyper)},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"surface_batch", c.surface_batch},
          {"occupancy_batch", c.occupancy_batch},
          {"sphere_batch", c.sphere_batch},
          {"accumulation", c.accumulation},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"embed_init_std", c.embed_init_std},
          {"embed_init", embed_init_name(c.embed_init)}};
}

FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig c) {
  auto& h = c.homeo;
  auto& w = c.weights;
  auto& y = c.hyper;
  overlay(j, "", {
      {"homeo", [&](const Json& v) {
         overlay(v, "homeo", {{"primitives", set(h.primitives)}, {"layers", set(h.layers)},
                              {"hidden", set(h.hidden)}, {"embed_dim", set(h.embed_dim)},
                              {"feature_dim", set(h.feature_dim)}, {"radius", set(h.radius)},
                              {"scale_clamp", set(h.scale_clamp)}});
       }},
      {"weights", [&](const Json& v) {
         overlay(v, "weights", {{"rec", set(w.rec)}, {"occ", set(w.occ)}, {"norm", set(w.norm)},
                                {"overlap", set(w.overlap)}, {"cover", set(w.cover)}});
       }},
      {"hyper", [&](const Json& v) {
         overlay(v, "hyper", {{"tau", set(y.tau)}, {"lambda", set(y.lambda)},
                              {"k_cover", set(y.k_cover)}, {"grad_step", set(y.grad_step)}});
       }},
      {"iterations", set(c.iterations)},
      {"learning_rate", set(c.learning_rate)},
      {"surface_batch", set(c.surface_batch)},
      {"occupancy_batch", set(c.occupancy_batch)},
      {"sphere_batch", set(c.sphere_batch)},
      {"accumulation", set(c.accumulation)},
      {"seed", set(c.seed)},
      {"checkpoint_interval", set(c.checkpoint_interval)},
      {"embed_init_std", set(c.embed_init_std)},
      {"embed_init", [&](const Json& v) {
         const std::string s = v.get<std::string>();
         if (s == "random") {
           c.embed_init = EmbeddingInit::kRandom;
         } else if (s == "duplicate") {
           c.embed_init = EmbeddingInit::kDuplicate;
         } else {
           throw UsageError("config: embed_init must be 'random' or 'duplicate'");
         }
       }},
  });
  return c;
}

void RunConfig::validate() const {
  fit.validate();
  if (pool_size < 2) throw UsageError("pool size must be >= 2");
  if (!(normalize_extent > 0.0 && normalize_extent <= 1.0)) {
    throw UsageError("normalize_extent must be in (0, 1]");
  }
  if (export_lat < 3 || export_lon < 3 || eval_lat < 3 || eval_lon < 3) {
    throw UsageError("tessellation resolution must be at least 3x3");
  }
  if (iou_samples < 1 || chamfer_samples < 1) throw UsageError("metric sample counts must be >= 1");
}

RunConfig paper_config() { return {}; }

RunConfig desk_config() {
  RunConfig c;
  c.fit.homeo.hidden = 64;
  c.fit.homeo.embed_dim = 64;
  c.fit.homeo.feature_dim = 64;
  c.fit.learning_rate = 1e-3;
  c.fit.surface_batch = 500;
  c.fit.occupancy_batch = 1000;
  c.fit.sphere_batch = 1000;
  c.fit.iterations = 1000;
  c.pool_size = 50000;
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = to_json(c.fit);
  j["pool_size"] = c.pool_size;
  j["normalize_extent"] = c.normalize_extent;
  j["export_lat"] = c.export_lat;
  j["export_lon"] = c.export_lon;
  j["iou_samples"] = c.iou_samples;
  j["chamfer_samples"] = c.chamfer_samples;
  j["eval_lat"] = c.eval_lat;
  j["eval_lon"] = c.eval_lon;
  j["mesh"] = c.mesh;
  j["out"] = c.out;
  j["occupancy_cache"] = c.occupancy_cache;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw UsageError("config: top level must be an object");
  const std::map<std::string, Setter> run_keys = {
      {"pool_size", set(c.pool_size)},
      {"normalize_extent", set(c.normalize_extent)},
      {"export_lat", set(c.export_lat)},
      {"export_lon", set(c.export_lon)},
      {"iou_samples", set(c.iou_samples)},
      {"chamfer_samples", set(c.chamfer_samples)},
      {"eval_lat", set(c.eval_lat)},
      {"eval_lon", set(c.eval_lon)},
      {"mesh", set(c.mesh)},
      {"out", set(c.out)},
      {"occupancy_cache", set(c.occupancy_cache)},
  };
  Json run_part = Json::object();
  Json fit_part = Json::object();
  for (const auto& [key, value] : j.items()) {
    (run_keys.count(key) ? run_part : fit_part)[key] = value;
  }
  overlay(run_part, "", run_keys);
  c.fit = fit_config_from_json(fit_part, c.fit);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("cannot read config: ") + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

}  // namespace nparts
