// Copyright 2026 The nparts Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "nparts/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Per-step graph buffers are large; keep them on the heap instead of
  // mapping and unmapping them every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return nparts::run_cli(argc, argv, std::cout, std::cerr);
}
