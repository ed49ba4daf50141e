// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include "nparts/blob_io.hpp"

#include <bit>
#include <fstream>

#include "nparts/errors.hpp"

namespace nparts {

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; big-endian hosts are unsupported");

void write_blob(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<double> read_blob(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open blob: " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(double)) {
    throw DataError("blob " + path.string() + " holds " + std::to_string(bytes) +
                    " bytes, manifest expects " +
                    std::to_string(expected * sizeof(double)));
  }
  std::vector<double> values(expected);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw DataError("read failed: " + path.string());
  return values;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << value.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed structured text in " + path.string() + ": " + e.what());
  }
}

}  // namespace nparts
