// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mop/metrics.hpp"
#include "mop/model.hpp"
#include "mop/trainer.hpp"

namespace mop {

/// Everything a training or evaluation run needs. Defaults are the
/// full-scale hyperparameters (25 bands, D = 250, 40000 iterations).
struct RunConfig {
  double lr = 6e-5;
  std::size_t batch_size = 4;
  double weight_decay = 0.01;
  std::size_t iterations = 40000;
  double lambda = 0.01;
  std::size_t K = 3;
  std::size_t D = 250;
  double tau = 0.1;
  double momentum = 0.999;
  double epsilon = 0.05;
  std::size_t sinkhorn_iters = 3;
  std::size_t groups = 25;
  double poly_power = 0.9;
  std::uint64_t seed = 0;

  std::array<std::size_t, 4> stage_depths{2, 2, 2, 2};
  /// Unset means groups x {1, 2, 5, 8}.
  std::optional<std::array<std::size_t, 4>> stage_channels;
  std::array<std::size_t, 4> stage_strides{2, 2, 1, 1};

  Variant variant = Variant::full();
  PrototypeUpdate prototype_update = PrototypeUpdate::kMomentum;

  std::string train_data;
  std::string eval_data;
  ScaleThresholds scale;
  /// Optional band centre wavelengths (nm) for the band-weight dump.
  std::vector<double> wavelengths;

  /// Throws ConfigError on any out-of-range or inconsistent value.
  void validate() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
};

/// `key = value` lines; `#` starts a comment; blank lines ignored.
/// Unknown keys, malformed values and out-of-range values throw ConfigError
/// naming the line.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace mop
