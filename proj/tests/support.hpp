// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "nparts/homeo.hpp"
#include "nparts/parameter_store.hpp"
#include "nparts/rng.hpp"

namespace nparts::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nparts_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline HomeoConfig tiny_homeo(int primitives = 2, int layers = 2) {
  HomeoConfig c;
  c.primitives = primitives;
  c.layers = layers;
  c.hidden = 8;
  c.embed_dim = 6;
  c.feature_dim = 5;
  return c;
}

/// Standard init followed by noise on every entry, so the s and t output
/// layers are no longer zero and the map is far from the identity.
inline ParameterStore random_parameters(const ConditionalHomeomorphism& h, Rng& rng,
                                        double noise = 0.3) {
  ParameterStore p;
  h.init_parameters(p, rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (Eigen::Index k = 0; k < p.data(i).size(); ++k) p.data(i)(k) += uniform(rng, -noise, noise);
  }
  return p;
}

inline ParameterStore identity_parameters(const ConditionalHomeomorphism& h, std::uint64_t seed = 1) {
  Rng rng(seed);
  ParameterStore p;
  h.init_parameters(p, rng);
  return p;
}

inline Points random_points(Eigen::Index n, Rng& rng, double half = 0.5) {
  Points x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) x(i, k) = uniform(rng, -half, half);
  }
  return x;
}

/// Identity map for every primitive except `m`, which is scaled by `factor`
/// about the origin. Needs a schedule that visits each axis exactly once.
inline ParameterStore scaled_primitive(const ConditionalHomeomorphism& h, int m, double factor) {
  const HomeoConfig& c = h.config();
  ParameterStore p = identity_parameters(h);
  Eigen::MatrixXd emb = Eigen::MatrixXd::Zero(c.primitives, c.embed_dim);
  emb(m, 0) = 1.0;
  p.set_matrix(ConditionalHomeomorphism::embedding_name(), emb);
  for (int l = 0; l < c.layers; ++l) {
    auto name = [&](const char* field) { return ConditionalHomeomorphism::param_name(l, "s", field); };
    // Hidden unit 0 is active only for primitive m and feeds s = ln(factor).
    Eigen::MatrixXd we = Eigen::MatrixXd::Zero(c.embed_dim, c.hidden);
    we(0, 0) = 1.0;
    p.set_matrix(name("fc0.weight_embed"), we);
    p.set_matrix(name("fc0.weight_feat"), Eigen::MatrixXd::Zero(c.feature_dim, c.hidden));
    p.set_matrix(name("fc0.bias"), Eigen::MatrixXd::Zero(1, c.hidden));
    Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(c.hidden, c.hidden);
    w1(0, 0) = 1.0;
    p.set_matrix(name("fc1.weight"), w1);
    p.set_matrix(name("fc1.bias"), Eigen::MatrixXd::Zero(1, c.hidden));
    Eigen::MatrixXd w2 = Eigen::MatrixXd::Zero(c.hidden, 1);
    w2(0, 0) = std::log(factor);
    p.set_matrix(name("fc2.weight"), w2);
  }
  return p;
}

inline ConditionalHomeomorphism radius_model(double r, int primitives = 1) {
  HomeoConfig c = tiny_homeo(primitives, 2);
  c.radius = r;
  return ConditionalHomeomorphism(c, {0, 1});
}

}  // namespace nparts::test
