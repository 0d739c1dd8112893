// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mop/cube.hpp"
#include "mop/model.hpp"
#include "mop/parameters.hpp"
#include "mop/prototypes.hpp"
#include "mop/random.hpp"

namespace mop {

struct OptimizerConfig {
  double learning_rate = 6e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double poly_power = 0.9;
  std::size_t total_steps = 40000;
};

/// AdamW with decoupled weight decay and polynomial learning-rate annealing
/// lr_t = lr * (1 - t / T)^power.
class AdamW {
 public:
  AdamW(ParameterList params, const OptimizerConfig& config);

  double learning_rate(std::size_t step) const;
  /// Applies one update using the gradients currently held by the parameters,
  /// then clears them. `step` is the 0-based index of the update.
  void step(std::size_t step);
  void zero_grad();

  const ParameterList& parameters() const noexcept { return params_; }

 private:
  ParameterList params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

struct Sample {
  std::string name;
  HyperCube cube;
  SegMask mask;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  double lambda = 0.01;
  SinkhornOptions sinkhorn;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
};

struct StepReport {
  std::size_t step = 0;
  double ce = 0.0;
  double lp = 0.0;
  double total = 0.0;
};

/// "step, ce, lp, total" line used by the training log.
std::string format_step(const StepReport& report);

/// Owns the optimizer state, step counter and batch sampler of one run.
class Trainer {
 public:
  Trainer(SegmentationModel& model, const TrainConfig& config);

  /// One forward over the batch, one backward on ce + lambda * lp, one
  /// optimizer update and (in momentum mode) one prototype update.
  /// Throws NumericError, naming the step, if the loss turns non-finite.
  StepReport train_step(std::span<const Sample* const> batch);

  /// Runs `steps` steps drawing batches from a per-epoch shuffle of `data`.
  void fit(std::span<const Sample> data, std::size_t steps, const std::function<void(const StepReport&)>& on_step = {});

  std::size_t step() const noexcept { return step_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  std::vector<const Sample*> next_batch(std::span<const Sample> data);

  SegmentationModel& model_;
  TrainConfig config_;
  AdamW optimizer_;
  std::size_t step_ = 0;
  Rng sampler_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace mop
