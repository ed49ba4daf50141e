// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/parameter_store.hpp"

#include "nparts/blob_io.hpp"
#include "nparts/errors.hpp"

namespace nparts {

std::size_t ParameterStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw UsageError("parameter '" + name + "' has empty shape");
  if (index_.count(name) != 0) throw UsageError("duplicate parameter name '" + name + "'");
  const std::size_t i = entries_.size();
  index_.emplace(name, i);
  entries_.push_back({std::move(name), rows, cols, Eigen::VectorXd::Zero(rows * cols)});
  return i;
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Eigen::Index ParameterStore::total_size() const {
  Eigen::Index n = 0;
  for (const auto& e : entries_) n += e.data.size();
  return n;
}

Eigen::MatrixXd ParameterStore::matrix(std::size_t i) const {
  const Entry& e = entries_[i];
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(e.data.data(), e.rows, e.cols);
}

void ParameterStore::set_matrix(std::size_t i, const Eigen::MatrixXd& value) {
  Entry& e = entries_[i];
  if (value.rows() != e.rows || value.cols() != e.cols) {
    throw UsageError("shape mismatch assigning parameter '" + e.name + "'");
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMajor>(e.data.data(), e.rows, e.cols) = value;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out = *this;
  for (auto& e : out.entries_) e.data.setZero();
  return out;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total_size()));
  for (const auto& e : entries_) out.insert(out.end(), e.data.begin(), e.data.end());
  return out;
}

void ParameterStore::assign_flat(const std::vector<double>& values) {
  if (static_cast<Eigen::Index>(values.size()) != total_size()) {
    throw DataError("flat parameter vector has wrong length");
  }
  std::size_t k = 0;
  for (auto& e : entries_) {
    for (Eigen::Index j = 0; j < e.data.size(); ++j) e.data[j] = values[k++];
  }
}

nlohmann::json ParameterStore::manifest() const {
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    entries.push_back({{"name", e.name},
                       {"shape", {e.rows, e.cols}},
                       {"offset", offset}});
    offset += static_cast<std::size_t>(e.data.size()) * sizeof(double);
  }
  return {{"dtype", "float64-le"}, {"entries", entries}, {"total_bytes", offset}};
}

ParameterStore ParameterStore::from_manifest(const nlohmann::json& manifest) {
  ParameterStore store;
  try {
    std::size_t offset = 0;
    for (const auto& e : manifest.at("entries")) {
      const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2) throw DataError("parameter shape must have rank 2");
      if (e.at("offset").get<std::size_t>() != offset) {
        throw DataError("manifest offsets are not contiguous at '" +
                        e.at("name").get<std::string>() + "'");
      }
      store.add(e.at("name").get<std::string>(), shape[0], shape[1]);
      offset += static_cast<std::size_t>(shape[0] * shape[1]) * sizeof(double);
    }
    if (manifest.at("total_bytes").get<std::size_t>() != offset) {
      throw DataError("manifest total_bytes disagrees with entry shapes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed parameter manifest: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed parameter manifest: ") + e.what());
  }
  return store;
}

void ParameterStore::save(const std::filesystem::path& manifest_path,
                          const std::filesystem::path& blob_path) const {
  write_json(manifest_path, manifest());
  const auto flat = flatten();
  write_blob(blob_path, flat);
}

ParameterStore ParameterStore::load(const std::filesystem::path& manifest_path,
                                    const std::filesystem::path& blob_path) {
  ParameterStore store = from_manifest(read_json(manifest_path));
  store.assign_flat(read_blob(blob_path, static_cast<std::size_t>(store.total_size())));
  return store;
}

}  // namespace nparts
