// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace nparts {

/// Entry point of the `nparts` tool. Returns the process exit code: 0 success,
/// 1 usage error, 2 data error, 3 numeric failure. Errors print one line to
/// `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nparts
