// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mop {

using Shape = std::vector<std::size_t>;

std::size_t volume(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient is accumulated into this tensor.
  std::vector<double> grad;
  bool requires_grad = false;
  // Tape that produced this tensor; null for leaves.
  const void* producer = nullptr;
};

}  // namespace detail

/// Dense row-major tensor of doubles. Copies share storage; ops always
/// allocate fresh outputs, so a tensor produced by an op is never rewritten.
/// Only leaves (parameters, inputs) are mutated, and only by their owner.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data().size(); }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  /// Accumulated gradient; all zeros if nothing has flowed in yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Same values, fresh storage, no gradient history.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(std::shared_ptr<detail::TensorImpl>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl);

}  // namespace mop
