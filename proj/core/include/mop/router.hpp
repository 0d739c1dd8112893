// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mop/parameters.hpp"
#include "mop/prototypes.hpp"
#include "mop/random.hpp"
#include "mop/tensor.hpp"

namespace mop {

/// Affine map concat(x_band, all C*K band-b prototypes) -> C*K logits, shared
/// across bands. Softmax runs over k within each class, giving alpha_{c,k}.
class ProtoGate {
 public:
  ProtoGate(std::size_t band_dim, std::size_t classes, std::size_t per_class, Rng& rng);

  /// x_band: N x (D/d); band_prototypes: (C*K) x (D/d). Returns alpha, N x (C*K).
  Tensor forward(const Tensor& x_band, const Tensor& band_prototypes) const;

  Tensor& feature_weight() noexcept { return feature_weight_; }
  Tensor& prototype_weight() noexcept { return prototype_weight_; }
  Tensor& bias() noexcept { return bias_; }
  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  std::size_t band_dim_, classes_, per_class_;
  // The concat input is split into its two parts: logits = x W_x + vec(P) W_p + b.
  Tensor feature_weight_;    // (D/d) x (C*K)
  Tensor prototype_weight_;  // (C*K*D/d) x (C*K)
  Tensor bias_;              // C*K
};

/// Affine map concat(x_indi, p_concat) -> d logits, softmax to beta. Without
/// prototypes the input is x_indi alone.
class FeatureGate {
 public:
  FeatureGate(std::size_t feature_dim, std::size_t bands, std::size_t classes, bool with_prototypes, Rng& rng);

  /// x_indi: N x D; p_concat: N x (C*D), ignored without prototypes. Returns beta, N x d.
  Tensor forward(const Tensor& x_indi, const Tensor& p_concat) const;

  bool with_prototypes() const noexcept { return with_prototypes_; }
  Tensor& feature_weight() noexcept { return feature_weight_; }
  Tensor& prototype_weight() noexcept { return prototype_weight_; }
  Tensor& bias() noexcept { return bias_; }
  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  std::size_t feature_dim_, bands_, classes_;
  bool with_prototypes_;
  Tensor feature_weight_;    // D x d
  Tensor prototype_weight_;  // (C*D) x d
  Tensor bias_;              // d
};

struct ProtoRoute {
  Tensor alpha;                 // N x (C*K)
  std::vector<Tensor> aggregated;  // per class, N x (D/d)
};

/// Prototype aggregation for one band: p_agg,c = sum_k alpha_{c,k} p_{c,k}.
/// With no gate, alpha is uniform (1/K).
ProtoRoute proto_route(const Tensor& x_band, const Tensor& band_prototypes, std::size_t classes, std::size_t per_class,
                       const ProtoGate* gate);

/// Band-importance weights beta (N x d) on the simplex.
Tensor feature_route(const Tensor& x_indi, const Tensor& p_concat, const FeatureGate& gate);

/// Repeat(beta, D/d) ⊙ x_indi.
Tensor apply_band_weights(const Tensor& beta, const Tensor& x_indi);

struct RouterConfig {
  std::size_t bands = 25;
  std::size_t feature_dim = 250;
  std::size_t classes = 2;
  std::size_t per_class = 3;
  bool use_prototypes = true;
  bool use_proto_router = true;
  bool use_feature_router = true;
};

struct RouteResult {
  Tensor output;               // x_MoP, N x D
  Tensor beta;                 // N x d (undefined without a feature router)
  std::vector<Tensor> alpha;   // per band, N x (C*K) (empty without prototypes)
  Tensor p_concat;             // N x (C*D)
};

/// Prototype router -> p_concat -> feature router -> band weighting.
class DualRouter {
 public:
  DualRouter(const RouterConfig& config, Rng& rng);

  /// `x_indi` is the flattened N x D individual-branch feature matrix.
  RouteResult route(const Tensor& x_indi, const PrototypeBank* bank) const;

  const RouterConfig& config() const noexcept { return config_; }
  ProtoGate* proto_gate() noexcept { return proto_gate_.empty() ? nullptr : &proto_gate_.front(); }
  FeatureGate* feature_gate() noexcept { return feature_gate_.empty() ? nullptr : &feature_gate_.front(); }
  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  RouterConfig config_;
  // Zero or one of each, depending on the ablation flags.
  std::vector<ProtoGate> proto_gate_;
  std::vector<FeatureGate> feature_gate_;
};

}  // namespace mop
