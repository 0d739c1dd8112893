// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/tape.hpp"

#include "mop/error.hpp"

namespace mop {

namespace {
thread_local GradTape* active_tape = nullptr;
}

namespace detail {
std::span<double> grad_buffer(TensorImpl& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}
}  // namespace detail

GradTape::GradTape() : previous_(active_tape) { active_tape = this; }

GradTape::~GradTape() {
  if (active_tape == this) active_tape = previous_;
}

GradTape* GradTape::current() noexcept { return active_tape; }

void GradTape::record(const Tensor& output, BackwardFn fn) {
  if (consumed_) throw GraphError("cannot record onto a tape that has already been differentiated");
  output.impl()->producer = this;
  entries_.push_back(Entry{output.impl(), std::move(fn)});
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_) throw GraphError("backward called twice on the same tape; record the graph again");
  if (!loss.defined() || loss.size() != 1) {
    throw GraphError("backward needs a scalar loss, got shape " + (loss.defined() ? to_string(loss.shape()) : "undefined"));
  }
  if (loss.impl()->producer != this) throw GraphError("loss was not recorded on this tape (detached graph)");

  consumed_ = true;
  auto seed = detail::grad_buffer(*loss.impl());
  seed[0] += 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    detail::TensorImpl& out = *it->output;
    if (out.grad.empty()) continue;  // loss does not depend on this op
    it->fn(out.grad);
  }
  // Drop closures so captured intermediates are released.
  for (auto& e : entries_) e.fn = nullptr;
}

}  // namespace mop
