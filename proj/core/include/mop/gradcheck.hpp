// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mop/tensor.hpp"

namespace mop {

/// A scalar function of some leaf tensors. `loss` must read the leaves
/// through the stored handles so that in-place perturbation is visible.
struct GradProblem {
  std::vector<Tensor> inputs;
  std::function<Tensor()> loss;
};

/// max over inputs of ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8),
/// numeric gradients by central differences.
double gradient_relative_error(GradProblem& problem, double step = 1e-5);

struct GradCheckOptions {
  std::size_t seeds = 20;
  std::uint64_t first_seed = 1;
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct GradCheckResult {
  std::string op;
  std::uint64_t seed = 0;
  double relative_error = 0.0;
  bool passed = false;
};

/// Names of the operations covered by the suite.
std::vector<std::string> gradcheck_ops();

/// Every op x every seed. `only` restricts to one op name when non-empty.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {}, const std::string& only = {});

}  // namespace mop
