// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/trainer.hpp"

#include <cmath>

#include "nparts/blob_io.hpp"
#include "nparts/config.hpp"
#include "nparts/errors.hpp"

namespace nparts {

namespace {

constexpr const char* kCheckpointFormat = "nparts-checkpoint";

FitState initial_state(const ConditionalHomeomorphism& model, const FitConfig& config, Rng rng) {
  FitState s;
  model.init_parameters(s.params, rng, config.embed_init_std);
  if (config.embed_init == EmbeddingInit::kDuplicate) {
    const std::size_t e = s.params.index_of(ConditionalHomeomorphism::embedding_name());
    Eigen::MatrixXd table = s.params.matrix(e);
    for (Eigen::Index m = 1; m < table.rows(); ++m) table.row(m) = table.row(0);
    s.params.set_matrix(e, table);
  }
  s.adam_m = s.params.zeros_like();
  s.adam_v = s.params.zeros_like();
  s.rng = rng;
  return s;
}

}  // namespace

void FitConfig::validate() const {
  homeo.validate();
  weights.validate();
  hyper.validate(homeo.primitives);
  if (iterations < 0) throw UsageError("iterations must be >= 0");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (surface_batch < 1 || occupancy_batch < 2 || sphere_batch < 1 || accumulation < 1) {
    throw UsageError("batch sizes and accumulation steps must be >= 1");
  }
  if (checkpoint_interval < 0) throw UsageError("checkpoint interval must be >= 0");
  if (occupancy_batch / 2 < hyper.k_cover) {
    throw UsageError("occupancy batch must hold at least k_cover interior points");
  }
}

void adam_step(FitState& state, const ParameterStore& grads, double lr,
               const AdamOptions& options) {
  if (!grads.same_layout(state.params)) throw UsageError("gradient layout does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads.entry(i).data.allFinite()) {
      throw NumericError("non-finite gradient for parameter '" + grads.entry(i).name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(options.beta1, t);
  const double bc2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Eigen::VectorXd& g = grads.entry(i).data;
    Eigen::VectorXd& m = state.adam_m.data(i);
    Eigen::VectorXd& v = state.adam_v.data(i);
    Eigen::VectorXd& p = state.params.data(i);
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + options.eps);
  }
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  const auto& s = ckpt.state;
  nlohmann::json manifest = {
      {"format", kCheckpointFormat},
      {"version", 1},
      {"step", s.step},
      {"schedule", ckpt.schedule},
      {"radius", ckpt.config.homeo.radius},
      {"config", to_json(ckpt.config)},
      {"rng", serialize_rng(s.rng)},
      {"last_loss", to_json(s.last_loss)},
      {"parameters", s.params.manifest()},
      {"blobs", {{"params", "params.bin"}, {"adam", "adam.bin"}}},
  };
  write_json(tmp / "manifest.json", manifest);
  write_blob(tmp / "params.bin", s.params.flatten());
  std::vector<double> adam = s.adam_m.flatten();
  const auto v = s.adam_v.flatten();
  adam.insert(adam.end(), v.begin(), v.end());
  write_blob(tmp / "adam.bin", adam);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("checkpoint directory not found: " + dir.string());
  }
  const auto manifest = read_json(dir / "manifest.json");
  Checkpoint ckpt;
  try {
    if (manifest.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError("not a checkpoint manifest: " + dir.string());
    }
    ckpt.config = fit_config_from_json(manifest.at("config"));
    ckpt.schedule = manifest.at("schedule").get<std::vector<int>>();
    ckpt.state.step = manifest.at("step").get<std::int64_t>();
    ckpt.state.rng = deserialize_rng(manifest.at("rng").get<std::string>());
    const auto& loss = manifest.at("last_loss");
    ckpt.state.last_loss = {loss.at("rec"), loss.at("occ"), loss.at("norm"),
                            loss.at("overlap"), loss.at("cover"), loss.at("total")};
    if (manifest.at("radius").get<double>() != ckpt.config.homeo.radius) {
      throw DataError("checkpoint radius disagrees with its config echo");
    }
    ckpt.state.params = ParameterStore::from_manifest(manifest.at("parameters"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
  // Shapes must match what the recorded architecture would create.
  const ConditionalHomeomorphism model = model_of(ckpt);
  if (!model.parameter_layout().same_layout(ckpt.state.params)) {
    throw DataError("checkpoint parameter shapes do not match its architecture");
  }
  const auto n = static_cast<std::size_t>(ckpt.state.params.total_size());
  ckpt.state.params.assign_flat(read_blob(dir / "params.bin", n));
  const auto adam = read_blob(dir / "adam.bin", 2 * n);
  ckpt.state.adam_m = ckpt.state.params.zeros_like();
  ckpt.state.adam_v = ckpt.state.params.zeros_like();
  ckpt.state.adam_m.assign_flat(std::vector<double>(adam.begin(), adam.begin() + static_cast<std::ptrdiff_t>(n)));
  ckpt.state.adam_v.assign_flat(std::vector<double>(adam.begin() + static_cast<std::ptrdiff_t>(n), adam.end()));
  return ckpt;
}

void check_compatible(const Checkpoint& ckpt, const FitConfig& config) {
  const HomeoConfig& a = ckpt.config.homeo;
  const HomeoConfig& b = config.homeo;
  auto mismatch = [](const char* what, auto x, auto y) {
    throw UsageError(std::string("checkpoint incompatible: ") + what + " is " + std::to_string(x) +
                     " in the checkpoint but " + std::to_string(y) + " in the config");
  };
  if (a.primitives != b.primitives) mismatch("primitive count", a.primitives, b.primitives);
  if (a.layers != b.layers) mismatch("layer count", a.layers, b.layers);
  if (a.hidden != b.hidden) mismatch("hidden width", a.hidden, b.hidden);
  if (a.embed_dim != b.embed_dim) mismatch("embedding size", a.embed_dim, b.embed_dim);
  if (a.feature_dim != b.feature_dim) mismatch("feature size", a.feature_dim, b.feature_dim);
  if (a.radius != b.radius) mismatch("sphere radius", a.radius, b.radius);
}

ConditionalHomeomorphism model_of(const Checkpoint& ckpt) {
  try {
    return ConditionalHomeomorphism(ckpt.config.homeo, ckpt.schedule);
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
}

Checkpoint initial_checkpoint(const FitConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.schedule = draw_split_schedule(config.homeo.layers, rng);
  ckpt.state = initial_state(ConditionalHomeomorphism(config.homeo, ckpt.schedule), config, rng);
  return ckpt;
}

Fitter::Fitter(const TriMesh& mesh, const OccupancyPool& pool, const FitConfig& config)
    : Fitter(mesh, pool, initial_checkpoint(config)) {}

Fitter::Fitter(const TriMesh& mesh, const OccupancyPool& pool, Checkpoint checkpoint)
    : config_(std::move(checkpoint.config)),
      model_(config_.homeo, std::move(checkpoint.schedule)),
      sampler_(mesh),
      pool_(pool),
      state_(std::move(checkpoint.state)) {
  config_.validate();
}

TrainingBatch Fitter::draw_batch() {
  TrainingBatch b;
  b.surface = sampler_.sample(config_.surface_batch, state_.rng);
  b.occupancy = pool_.draw_batch(config_.occupancy_batch, state_.rng);
  for (int m = 0; m < model_.primitives(); ++m) {
    b.sphere.push_back(sample_sphere(config_.sphere_batch, model_.radius(), state_.rng));
  }
  return b;
}

std::pair<ParameterStore, LossBreakdown> Fitter::gradient(
    const std::vector<TrainingBatch>& batches) const {
  ParameterStore grads = state_.params.zeros_like();
  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(batches.size());
  for (const auto& batch : batches) {
    ad::Graph g(&state_.params);
    const LossResult loss = loss_total(g, model_, state_.params, batch, config_.weights, config_.hyper);
    const ParameterStore part = g.backward(loss.total);
    for (std::size_t i = 0; i < grads.size(); ++i) grads.data(i) += inv * part.entry(i).data;
    mean.rec += inv * loss.breakdown.rec;
    mean.occ += inv * loss.breakdown.occ;
    mean.norm += inv * loss.breakdown.norm;
    mean.overlap += inv * loss.breakdown.overlap;
    mean.cover += inv * loss.breakdown.cover;
    mean.total += inv * loss.breakdown.total;
  }
  return {std::move(grads), mean};
}

LossBreakdown Fitter::step() {
  std::vector<TrainingBatch> batches;
  for (int a = 0; a < config_.accumulation; ++a) batches.push_back(draw_batch());
  auto [grads, breakdown] = gradient(batches);
  if (!std::isfinite(breakdown.total)) throw NumericError("loss diverged (non-finite total)");
  adam_step(state_, grads, config_.learning_rate);
  state_.last_loss = breakdown;
  return breakdown;
}

void Fitter::run(const RunOptions& options) {
  auto save = [&] {
    if (options.checkpoint_dir) save_checkpoint(*options.checkpoint_dir, checkpoint());
  };
  if (state_.step == 0) save();
  while (state_.step < config_.iterations) {
    const LossBreakdown b = step();
    if (options.on_step) options.on_step(state_.step, b);
    if (config_.checkpoint_interval > 0 && state_.step % config_.checkpoint_interval == 0) save();
  }
  save();
}

std::string log_record(std::int64_t step, const LossBreakdown& b) {
  nlohmann::json j = to_json(b);
  j["step"] = step;
  return j.dump();
}

}  // namespace nparts
