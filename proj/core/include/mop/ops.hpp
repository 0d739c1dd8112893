// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mop/tensor.hpp"

// Differentiable ops. Every op allocates a fresh output, throws NumericError
// if that output contains NaN/Inf, and records a backward closure when a
// GradTape is active and some input requires a gradient.
//
// Image-like tensors are channel-last H x W x C. Matrices are rows x cols.
namespace mop {

struct Conv2dOptions {
  std::size_t groups = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Grouped 2-D convolution.
///
/// `kernel` has shape [G, kh, kw, Cin/G, Cout/G]; output channel block g
/// reads input channel block g only. `bias` is optional ([Cout]).
/// Throws ShapeError when Cin or Cout is not divisible by the group count,
/// when the kernel is not odd-sized, or when the input does not fit.
Tensor grouped_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& options);

/// Group normalisation over (H, W, channels-of-group) with a per-channel affine.
Tensor group_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::size_t groups, double eps = 1e-5);

/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);

/// Max-shifted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
/// Scalar sum / mean over every element.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// [m, k] x [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
/// Adds a length-n row to every row of an [m, n] matrix.
Tensor add_row(const Tensor& x, const Tensor& row);

/// Divides each row by (its l2 norm + eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

/// Divides every element by the sum of its slice along `axis` (0 or 1) of a
/// matrix. Inputs must be positive along each slice.
Tensor normalize_sum(const Tensor& x, std::size_t axis);
/// Divides every element by the sum of all elements.
Tensor normalize_sum_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Replicates every column `repeats` times in place: [m, n] -> [m, n * repeats].
Tensor repeat_cols(const Tensor& x, std::size_t repeats);

/// Mean binary cross-entropy of probabilities against {0,1} targets, with the
/// probabilities clamped to [clamp, 1 - clamp].
Tensor binary_cross_entropy(const Tensor& prob, std::span<const double> target, double clamp = 1e-7);

/// Mean over rows of -log softmax(logits)[row, target[row]].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> target);

}  // namespace mop
