// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nparts/geometry.hpp"
#include "nparts/homeo.hpp"
#include "nparts/losses.hpp"
#include "nparts/parameter_store.hpp"
#include "nparts/rng.hpp"

namespace nparts {

/// How embeddings are initialized.
enum class EmbeddingInit {
  kRandom,     ///< independent N(0, std^2) rows
  kDuplicate,  ///< every row equals row 0 (adversarial: symmetric primitives)
};

struct FitConfig {
  HomeoConfig homeo;
  LossWeights weights;
  LossHyper hyper;
  int iterations = 1000;
  double learning_rate = 1e-4;
  int surface_batch = 2000;
  int occupancy_batch = 5000;
  int sphere_batch = 200;
  int accumulation = 1;
  std::uint64_t seed = 0;
  /// Steps between checkpoints; 0 writes only the final one.
  int checkpoint_interval = 0;
  double embed_init_std = 1.0;
  EmbeddingInit embed_init = EmbeddingInit::kRandom;

  void validate() const;
};

nlohmann::json to_json(const FitConfig& c);

/// Everything that changes during optimization.
struct FitState {
  ParameterStore params;
  ParameterStore adam_m;
  ParameterStore adam_v;
  std::int64_t step = 0;
  Rng rng;
  LossBreakdown last_loss;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam without weight decay. Increments `state.step`. Throws
/// NumericError naming the first parameter with a non-finite gradient, before
/// touching any state.
void adam_step(FitState& state, const ParameterStore& grads, double lr,
               const AdamOptions& options = {});

struct Checkpoint {
  FitConfig config;
  std::vector<int> schedule;
  FitState state;
};

/// Writes manifest.json, params.bin and adam.bin into `dir` (replaced
/// atomically via a sibling temporary directory).
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
/// Validates blob lengths against the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);
/// Throws UsageError if the checkpoint's architecture differs from `config`.
void check_compatible(const Checkpoint& ckpt, const FitConfig& config);

ConditionalHomeomorphism model_of(const Checkpoint& ckpt);

/// State of a fresh run before any step: the seed drives the split schedule,
/// then the parameter initialization; sampling continues from the same
/// generator.
Checkpoint initial_checkpoint(const FitConfig& config);

/// Auto-decoder fitting of M primitives to one normalized, watertight mesh.
class Fitter {
 public:
  /// Fresh run from initial_checkpoint(config).
  Fitter(const TriMesh& mesh, const OccupancyPool& pool, const FitConfig& config);
  /// Resumes from a checkpoint.
  Fitter(const TriMesh& mesh, const OccupancyPool& pool, Checkpoint checkpoint);

  const ConditionalHomeomorphism& model() const { return model_; }
  const FitState& state() const { return state_; }
  const FitConfig& config() const { return config_; }
  Checkpoint checkpoint() const { return {config_, model_.schedule(), state_}; }

  /// Fresh surface, occupancy and sphere samples from the run's generator.
  TrainingBatch draw_batch();

  /// Gradient of the total loss averaged over `batches`, plus the averaged
  /// breakdown.
  std::pair<ParameterStore, LossBreakdown> gradient(const std::vector<TrainingBatch>& batches) const;

  /// One optimizer step over `accumulation` fresh micro-batches.
  LossBreakdown step();

  struct RunOptions {
    std::optional<std::filesystem::path> checkpoint_dir;
    std::function<void(std::int64_t step, const LossBreakdown&)> on_step;
  };
  /// Steps until `config.iterations`. Writes a checkpoint every
  /// `checkpoint_interval` steps and at the end. On a non-finite loss the
  /// last written checkpoint is left in place and the NumericError propagates.
  void run(const RunOptions& options);

 private:
  FitConfig config_;
  ConditionalHomeomorphism model_;
  SurfaceSampler sampler_;
  const OccupancyPool& pool_;
  FitState state_;
};

/// One structured-text (JSON) line for the per-step log.
std::string log_record(std::int64_t step, const LossBreakdown& b);

}  // namespace nparts
