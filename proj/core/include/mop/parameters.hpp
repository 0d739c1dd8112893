// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "mop/tensor.hpp"

namespace mop {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Handles to trainable leaves; tensors share storage with their owners.
using ParameterList = std::vector<NamedTensor>;

}  // namespace mop
