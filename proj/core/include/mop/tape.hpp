// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mop/tensor.hpp"

namespace mop {

/// Records differentiable ops while it is the active tape on this thread.
///
/// Constructing a tape makes it active; destroying it restores whichever
/// tape was active before. Ops only record when a tape is active and at least
/// one input requires a gradient, so code running with no tape is inference.
/// Recording order is a topological order, so backward() walks the entries
/// once in reverse. A tape can be differentiated exactly once.
class GradTape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Populates gradients of every tensor that requires them and that the loss
  /// depends on. Throws GraphError for non-scalar losses, losses recorded on a
  /// different tape (or none), and on a second call.
  void backward(const Tensor& loss);

  std::size_t op_count() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }

  static GradTape* current() noexcept;

  void record(const Tensor& output, BackwardFn fn);

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  GradTape* previous_ = nullptr;
  bool consumed_ = false;
};

namespace detail {
/// Gradient buffer of `impl`, zero-initialised on first access.
std::span<double> grad_buffer(TensorImpl& impl);
}  // namespace detail

}  // namespace mop
