// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "mop/tensor.hpp"

namespace mop {

/// Seeded generator used everywhere randomness enters (init, data, sampling).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Independent stream derived from (seed, stream); used to make sample i of
  /// a synthetic set independent of how many samples are drawn.
  Rng(std::uint64_t seed, std::uint64_t stream);

  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  /// Normal(0, stddev) resampled until it falls within two standard deviations.
  double truncated_normal(double stddev);
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

Tensor random_normal(Shape shape, double stddev, Rng& rng);
Tensor random_truncated_normal(Shape shape, double stddev, Rng& rng);
Tensor random_uniform(Shape shape, double lo, double hi, Rng& rng);

}  // namespace mop
