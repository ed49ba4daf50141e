// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace nparts {

/// The single random engine used throughout a run. Distribution objects are
/// created per draw so that the engine state alone determines every future
/// sample, which is what makes checkpoint resumption bit-exact.
using Rng = std::mt19937_64;

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

/// Deterministic 64-bit mix of two words (splitmix64 finalizer).
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

}  // namespace nparts
