// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace nparts {

/// Named, fixed-shape float64 tensors in insertion order.
///
/// Each entry is a rows x cols matrix stored flat in row-major order.
/// Iteration order is insertion order, and the concatenation of all entries
/// in that order is the canonical serialization layout.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::VectorXd data;
  };

  /// Adds a zero-initialized entry and returns its index. Names must be unique.
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  Eigen::Index total_size() const;

  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Eigen::VectorXd& data(std::size_t i) { return entries_[i].data; }
  const Eigen::VectorXd& data(std::string_view name) const {
    return entries_[index_of(name)].data;
  }

  Eigen::MatrixXd matrix(std::size_t i) const;
  Eigen::MatrixXd matrix(std::string_view name) const { return matrix(index_of(name)); }
  void set_matrix(std::size_t i, const Eigen::MatrixXd& value);
  void set_matrix(std::string_view name, const Eigen::MatrixXd& value) {
    set_matrix(index_of(name), value);
  }

  /// Same names and shapes, all values zero.
  ParameterStore zeros_like() const;
  bool same_layout(const ParameterStore& other) const;

  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& values);

  /// Manifest listing name, shape and byte offset of every entry.
  nlohmann::json manifest() const;
  static ParameterStore from_manifest(const nlohmann::json& manifest);

  /// Writes `<stem>.json` (manifest) and `<stem>.bin` (blob).
  void save(const std::filesystem::path& manifest_path,
            const std::filesystem::path& blob_path) const;
  static ParameterStore load(const std::filesystem::path& manifest_path,
                             const std::filesystem::path& blob_path);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace nparts
