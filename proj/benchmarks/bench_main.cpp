// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

// Linked in place of benchmark_main, whose packaged archive carries LTO
// bytecode from a different compiler release.

#include <benchmark/benchmark.h>

BENCHMARK_MAIN();
