// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/prototypes.hpp"

#include <algorithm>
#include <cmath>

#include "mop/error.hpp"
#include "mop/ops.hpp"

namespace mop {

std::optional<Tensor> sinkhorn_from_scores(const Tensor& scores, const SinkhornOptions& options) {
  if (scores.rank() != 2) throw ShapeError("sinkhorn: scores must be K x N");
  if (options.epsilon <= 0.0) throw ShapeError("sinkhorn: epsilon must be positive");
  const std::size_t k = scores.dim(0), n = scores.dim(1);
  if (k == 0) throw ShapeError("sinkhorn: no prototypes");
  if (n == 0) return std::nullopt;

  Tensor m = normalize_sum_all(exp(scale(scores, 1.0 / options.epsilon)));
  for (std::size_t it = 0; it < options.iterations; ++it) {
    m = scale(normalize_sum(m, 1), 1.0 / static_cast<double>(k));
    m = scale(normalize_sum(m, 0), 1.0 / static_cast<double>(n));
  }
  return scale(m, static_cast<double>(n));
}

std::optional<Tensor> sinkhorn_assign(const Tensor& prototypes, const Tensor& features, const SinkhornOptions& options) {
  if (prototypes.rank() != 2 || features.rank() != 2 || features.dim(1) != prototypes.dim(0)) {
    throw ShapeError("sinkhorn_assign: expected (D/d) x K prototypes and N x (D/d) features, got " +
                     to_string(prototypes.shape()) + " and " + to_string(features.shape()));
  }
  if (features.dim(0) == 0) return std::nullopt;
  return sinkhorn_from_scores(matmul(transpose(prototypes), transpose(features)), options);
}

std::vector<std::size_t> hard_assignment(const Tensor& assignment) {
  const std::size_t k = assignment.dim(0), n = assignment.dim(1);
  const auto v = assignment.data();
  std::vector<std::size_t> out(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 1; i < k; ++i) {
      if (v[i * n + j] > v[out[j] * n + j]) out[j] = i;
    }
  }
  return out;
}

PrototypeBank::PrototypeBank(const PrototypeConfig& config, Rng& rng)
    : PrototypeBank(config, random_truncated_normal({config.classes, config.per_class, config.bands, config.dim}, 0.02, rng)) {
  renormalize();
}

PrototypeBank::PrototypeBank(const PrototypeConfig& config, Tensor values) : config_(config), values_(std::move(values)) {
  if (config_.classes == 0 || config_.per_class == 0 || config_.bands == 0 || config_.dim == 0) {
    throw ShapeError("prototype bank: every extent must be positive");
  }
  const Shape expected{config_.classes, config_.per_class, config_.bands, config_.dim};
  if (values_.shape() != expected) {
    throw ShapeError("prototype bank: values " + to_string(values_.shape()) + " != " + to_string(expected));
  }
}

std::size_t PrototypeBank::offset(std::size_t cls, std::size_t k, std::size_t band) const {
  if (cls >= config_.classes || k >= config_.per_class || band >= config_.bands) {
    throw ShapeError("prototype bank: index out of range");
  }
  return ((cls * config_.per_class + k) * config_.bands + band) * config_.dim;
}

std::span<const double> PrototypeBank::prototype(std::size_t cls, std::size_t k, std::size_t band) const {
  return values_.data().subspan(offset(cls, k, band), config_.dim);
}

std::span<double> PrototypeBank::prototype(std::size_t cls, std::size_t k, std::size_t band) {
  return values_.mutable_data().subspan(offset(cls, k, band), config_.dim);
}

Tensor PrototypeBank::class_band_matrix(std::size_t cls, std::size_t band) const {
  const std::size_t m = config_.dim, kk = config_.per_class;
  Tensor out({m, kk});
  auto o = out.mutable_data();
  for (std::size_t k = 0; k < kk; ++k) {
    const auto p = prototype(cls, k, band);
    for (std::size_t i = 0; i < m; ++i) o[i * kk + k] = p[i];
  }
  return out;
}

Tensor PrototypeBank::band_rows(std::size_t band) const {
  if (band >= config_.bands) throw ShapeError("prototype bank: band out of range");
  const std::size_t rows = config_.classes * config_.per_class;
  const Tensor flat = reshape(values_, {rows, config_.bands * config_.dim});
  return slice_cols(flat, band * config_.dim, (band + 1) * config_.dim);
}

void PrototypeBank::renormalize() {
  auto v = values_.mutable_data();
  for (std::size_t off = 0; off < v.size(); off += config_.dim) {
    double s = 0.0;
    for (std::size_t i = 0; i < config_.dim; ++i) s += v[off + i] * v[off + i];
    const double denom = s > 0.0 ? std::sqrt(s) : 1e-12;
    for (std::size_t i = 0; i < config_.dim; ++i) v[off + i] /= denom;
  }
}

double PrototypeBank::max_norm_deviation() const {
  const auto v = values_.data();
  double worst = 0.0;
  for (std::size_t off = 0; off < v.size(); off += config_.dim) {
    double s = 0.0;
    for (std::size_t i = 0; i < config_.dim; ++i) s += v[off + i] * v[off + i];
    worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
  }
  return worst;
}

void momentum_step(std::span<double> prototype, std::span<const double> target, double momentum) {
  if (prototype.size() != target.size()) throw ShapeError("momentum_step: dimension mismatch");
  if (momentum == 1.0) return;  // frozen
  double s = 0.0;
  for (std::size_t i = 0; i < prototype.size(); ++i) {
    prototype[i] = momentum * prototype[i] + (1.0 - momentum) * target[i];
    s += prototype[i] * prototype[i];
  }
  // A unit prototype stays put when the target equals it; the guard only
  // matters for the degenerate zero result.
  const double denom = s > 0.0 ? std::sqrt(s) : 1e-12;
  for (double& v : prototype) v /= denom;
}

void update_prototypes(PrototypeBank& bank, std::size_t cls, std::size_t band, const Tensor& features,
                       std::span<const std::size_t> assignment) {
  const PrototypeConfig& cfg = bank.config();
  if (features.rank() != 2 || features.dim(1) != cfg.dim || features.dim(0) != assignment.size()) {
    throw ShapeError("update_prototypes: features must be N x (D/d) with one assignment per row");
  }
  const std::size_t n = features.dim(0), m = cfg.dim;
  const auto f = features.data();
  for (std::size_t k = 0; k < cfg.per_class; ++k) {
    std::vector<double> mean(m, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment[i] >= cfg.per_class) throw ShapeError("update_prototypes: assignment index out of range");
      if (assignment[i] != k) continue;
      ++count;
      for (std::size_t j = 0; j < m; ++j) mean[j] += f[i * m + j];
    }
    if (count == 0) continue;
    double s = 0.0;
    for (double& v : mean) {
      v /= static_cast<double>(count);
      s += v * v;
    }
    const double denom = s > 0.0 ? std::sqrt(s) : 1e-12;
    for (double& v : mean) v /= denom;
    momentum_step(bank.prototype(cls, k, band), mean, cfg.momentum);
  }
}

double contrastive_loss(std::span<const double> pixel, std::span<const double> positive,
                        std::span<const std::vector<double>> negatives, double temperature) {
  if (temperature <= 0.0) throw ShapeError("contrastive_loss: temperature must be positive");
  if (negatives.empty()) return 0.0;
  auto dot = [&](std::span<const double> p) {
    if (p.size() != pixel.size()) throw ShapeError("contrastive_loss: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += pixel[i] * p[i];
    return s / temperature;
  };
  const double pos = dot(positive);
  std::vector<double> logits{pos};
  for (const auto& neg : negatives) logits.push_back(dot(neg));
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - pos;
}

Tensor prototype_contrastive_loss(const Tensor& pixels, const Tensor& band_prototypes,
                                  std::span<const std::size_t> positive, double temperature) {
  if (temperature <= 0.0) throw ShapeError("prototype_contrastive_loss: temperature must be positive");
  const Tensor logits = scale(matmul(pixels, transpose(band_prototypes)), 1.0 / temperature);
  return softmax_cross_entropy(logits, positive);
}

}  // namespace mop
