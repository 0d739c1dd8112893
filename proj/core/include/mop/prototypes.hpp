// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mop/random.hpp"
#include "mop/tensor.hpp"

namespace mop {

struct SinkhornOptions {
  double epsilon = 0.05;
  std::size_t iterations = 3;
};

/// Entropic optimal-transport assignment of N pixels to K prototypes.
///
/// `scores` is the K x N similarity matrix. The result is
/// exp(scores / eps) normalised to unit total mass, then `iterations` rounds
/// of (rows to 1/K, columns to 1/N), and finally scaled by N so every column
/// sums to one. Built from tape ops, so it is differentiable when its inputs
/// are. Returns nullopt when N == 0 (class absent from the batch).
std::optional<Tensor> sinkhorn_from_scores(const Tensor& scores, const SinkhornOptions& options = {});

/// Same, from a (D/d) x K prototype matrix and N x (D/d) l2-normalised
/// features: scores = prototypesᵀ featuresᵀ.
std::optional<Tensor> sinkhorn_assign(const Tensor& prototypes, const Tensor& features,
                                      const SinkhornOptions& options = {});

/// Column-wise argmax of a K x N assignment (ties go to the lower index).
std::vector<std::size_t> hard_assignment(const Tensor& assignment);

struct PrototypeConfig {
  std::size_t classes = 2;
  std::size_t per_class = 3;  // K
  std::size_t bands = 25;
  std::size_t dim = 10;  // D / d
  double momentum = 0.999;
  double temperature = 0.1;
};

/// C x K x d unit-norm prototypes of dimension D/d, stored as one
/// [C, K, d, D/d] tensor.
class PrototypeBank {
 public:
  /// Truncated normal (std 0.02), then l2-normalised.
  PrototypeBank(const PrototypeConfig& config, Rng& rng);
  PrototypeBank(const PrototypeConfig& config, Tensor values);

  const PrototypeConfig& config() const noexcept { return config_; }
  const Tensor& values() const noexcept { return values_; }
  Tensor& values() noexcept { return values_; }

  std::span<const double> prototype(std::size_t cls, std::size_t k, std::size_t band) const;
  std::span<double> prototype(std::size_t cls, std::size_t k, std::size_t band);

  /// P_c^(b): (D/d) x K, one prototype per column. Detached copy.
  Tensor class_band_matrix(std::size_t cls, std::size_t band) const;
  /// All C*K prototypes of `band` as rows, ordered (class, k). Differentiable
  /// with respect to values() when the bank is trained by gradient.
  Tensor band_rows(std::size_t band) const;

  void renormalize();
  /// max | ||p|| - 1 | over all prototypes.
  double max_norm_deviation() const;

 private:
  std::size_t offset(std::size_t cls, std::size_t k, std::size_t band) const;

  PrototypeConfig config_;
  Tensor values_;
};

/// p <- momentum * p + (1 - momentum) * target, then p is re-normalised.
/// momentum = 1 leaves p bitwise untouched.
/// `target` is expected to be unit length already.
void momentum_step(std::span<double> prototype, std::span<const double> target, double momentum);

/// Momentum update of the K prototypes of (cls, band) from pixels hard-assigned
/// to them. `features` is N x (D/d) (l2-normalised rows), `assignment[i]` is
/// the prototype index of row i. The target for prototype k is the
/// l2-normalised mean of its pixels; prototypes with no pixels are unchanged.
void update_prototypes(PrototypeBank& bank, std::size_t cls, std::size_t band, const Tensor& features,
                       std::span<const std::size_t> assignment);

/// Pixel-prototype contrastive loss for one pixel:
/// -log(exp(x.p+/tau) / (exp(x.p+/tau) + sum exp(x.p-/tau))). Zero when there
/// are no negatives.
double contrastive_loss(std::span<const double> pixel, std::span<const double> positive,
                        std::span<const std::vector<double>> negatives, double temperature);

/// Batched, differentiable form: mean over rows of the loss above, where the
/// candidates are the rows of `band_prototypes` and `positive[i]` indexes the
/// positive row for pixel i (every other row is a negative).
Tensor prototype_contrastive_loss(const Tensor& pixels, const Tensor& band_prototypes,
                                  std::span<const std::size_t> positive, double temperature);

}  // namespace mop
