// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace nparts {

/// Writes values as a flat little-endian float64 blob.
void write_blob(const std::filesystem::path& path, std::span<const double> values);

/// Reads a float64 blob; throws DataError unless it holds exactly `expected`
/// values.
std::vector<double> read_blob(const std::filesystem::path& path, std::size_t expected);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace nparts
