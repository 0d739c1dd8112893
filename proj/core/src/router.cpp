// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/router.hpp"

#include "mop/encoder.hpp"
#include "mop/error.hpp"
#include "mop/ops.hpp"

namespace mop {

namespace {

Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

constexpr double kGateInitStd = 0.02;

}  // namespace

ProtoGate::ProtoGate(std::size_t band_dim, std::size_t classes, std::size_t per_class, Rng& rng)
    : band_dim_(band_dim),
      classes_(classes),
      per_class_(per_class),
      feature_weight_(trainable(random_truncated_normal({band_dim, classes * per_class}, kGateInitStd, rng))),
      prototype_weight_(
          trainable(random_truncated_normal({classes * per_class * band_dim, classes * per_class}, kGateInitStd, rng))),
      bias_(trainable(Tensor({classes * per_class}, 0.0))) {}

Tensor ProtoGate::forward(const Tensor& x_band, const Tensor& band_prototypes) const {
  const std::size_t ck = classes_ * per_class_;
  if (x_band.rank() != 2 || x_band.dim(1) != band_dim_) throw ShapeError("proto gate: expected N x (D/d) band features");
  if (band_prototypes.shape() != Shape{ck, band_dim_}) throw ShapeError("proto gate: expected (C*K) x (D/d) prototypes");
  const std::size_t n = x_band.dim(0);
  const Tensor proto_term = matmul(reshape(band_prototypes, {1, ck * band_dim_}), prototype_weight_);
  const Tensor logits = add_row(matmul(x_band, feature_weight_), add(reshape(proto_term, {ck}), bias_));
  return reshape(softmax(reshape(logits, {n, classes_, per_class_}), 2), {n, ck});
}

void ProtoGate::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight_x", feature_weight_});
  out.push_back({prefix + "weight_p", prototype_weight_});
  out.push_back({prefix + "bias", bias_});
}

FeatureGate::FeatureGate(std::size_t feature_dim, std::size_t bands, std::size_t classes, bool with_prototypes, Rng& rng)
    : feature_dim_(feature_dim),
      bands_(bands),
      classes_(classes),
      with_prototypes_(with_prototypes),
      feature_weight_(trainable(random_truncated_normal({feature_dim, bands}, kGateInitStd, rng))),
      bias_(trainable(Tensor({bands}, 0.0))) {
  if (with_prototypes_) {
    prototype_weight_ = trainable(random_truncated_normal({classes * feature_dim, bands}, kGateInitStd, rng));
  }
}

Tensor FeatureGate::forward(const Tensor& x_indi, const Tensor& p_concat) const {
  if (x_indi.rank() != 2 || x_indi.dim(1) != feature_dim_) throw ShapeError("feature gate: expected N x D features");
  Tensor logits = matmul(x_indi, feature_weight_);
  if (with_prototypes_) {
    if (!p_concat.defined() || p_concat.shape() != Shape{x_indi.dim(0), classes_ * feature_dim_}) {
      throw ShapeError("feature gate: expected N x (C*D) concatenated prototypes");
    }
    logits = add(logits, matmul(p_concat, prototype_weight_));
  }
  const Tensor beta = softmax(add_row(logits, bias_), 1);
  if (beta.dim(1) != bands_) throw ShapeError("feature gate: output width does not match band count");
  return beta;
}

void FeatureGate::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight_x", feature_weight_});
  if (with_prototypes_) out.push_back({prefix + "weight_p", prototype_weight_});
  out.push_back({prefix + "bias", bias_});
}

ProtoRoute proto_route(const Tensor& x_band, const Tensor& band_prototypes, std::size_t classes, std::size_t per_class,
                       const ProtoGate* gate) {
  if (per_class == 0) throw ShapeError("proto_route: K must be at least 1");
  const std::size_t n = x_band.dim(0), ck = classes * per_class;
  if (band_prototypes.rank() != 2 || band_prototypes.dim(0) != ck || band_prototypes.dim(1) != x_band.dim(1)) {
    throw ShapeError("proto_route: prototype rows do not match C*K x (D/d)");
  }
  ProtoRoute route;
  route.alpha = gate ? gate->forward(x_band, band_prototypes)
                     : Tensor({n, ck}, 1.0 / static_cast<double>(per_class));
  for (std::size_t c = 0; c < classes; ++c) {
    const Tensor alpha_c = slice_cols(route.alpha, c * per_class, (c + 1) * per_class);
    const Tensor protos_c = transpose(slice_cols(transpose(band_prototypes), c * per_class, (c + 1) * per_class));
    route.aggregated.push_back(matmul(alpha_c, protos_c));
  }
  return route;
}

Tensor feature_route(const Tensor& x_indi, const Tensor& p_concat, const FeatureGate& gate) {
  return gate.forward(x_indi, p_concat);
}

Tensor apply_band_weights(const Tensor& beta, const Tensor& x_indi) {
  if (beta.rank() != 2 || x_indi.rank() != 2 || beta.dim(0) != x_indi.dim(0)) {
    throw ShapeError("apply_band_weights: beta and features must have the same row count");
  }
  const std::size_t bands = beta.dim(1), dim = x_indi.dim(1);
  if (bands == 0 || dim % bands != 0) {
    throw ShapeError("apply_band_weights: D=" + std::to_string(dim) + " not divisible by d=" + std::to_string(bands));
  }
  return mul(repeat_cols(beta, dim / bands), x_indi);
}

DualRouter::DualRouter(const RouterConfig& config, Rng& rng) : config_(config) {
  if (config_.bands == 0 || config_.feature_dim % config_.bands != 0) {
    throw ShapeError("router: D not divisible by d");
  }
  const std::size_t band_dim = config_.feature_dim / config_.bands;
  if (config_.use_prototypes && config_.use_proto_router) {
    proto_gate_.emplace_back(band_dim, config_.classes, config_.per_class, rng);
  }
  if (config_.use_feature_router) {
    feature_gate_.emplace_back(config_.feature_dim, config_.bands, config_.classes, config_.use_prototypes, rng);
  }
}

RouteResult DualRouter::route(const Tensor& x_indi, const PrototypeBank* bank) const {
  const RouterConfig& cfg = config_;
  if (x_indi.rank() != 2 || x_indi.dim(1) != cfg.feature_dim) throw ShapeError("router: expected N x D features");
  RouteResult result;
  if (!cfg.use_feature_router) {
    result.output = x_indi;
    return result;
  }
  if (cfg.use_prototypes) {
    if (bank == nullptr) throw ShapeError("router: prototypes enabled but no bank given");
    const PrototypeConfig& pc = bank->config();
    if (pc.bands != cfg.bands || pc.dim * cfg.bands != cfg.feature_dim || pc.classes != cfg.classes ||
        pc.per_class != cfg.per_class) {
      throw ShapeError("router: prototype bank layout does not match the feature map");
    }
    std::vector<std::vector<Tensor>> per_class(cfg.classes);
    const ProtoGate* gate = proto_gate_.empty() ? nullptr : &proto_gate_.front();
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      ProtoRoute pr = proto_route(band_view(x_indi, b, cfg.bands), bank->band_rows(b), cfg.classes, cfg.per_class, gate);
      for (std::size_t c = 0; c < cfg.classes; ++c) per_class[c].push_back(std::move(pr.aggregated[c]));
      result.alpha.push_back(std::move(pr.alpha));
    }
    // Classes outermost, bands ascending.
    std::vector<Tensor> parts;
    for (auto& bands : per_class) {
      for (Tensor& t : bands) parts.push_back(std::move(t));
    }
    result.p_concat = concat_cols(parts);
  }
  result.beta = feature_route(x_indi, result.p_concat, feature_gate_.front());
  result.output = apply_band_weights(result.beta, x_indi);
  return result;
}

void DualRouter::collect_parameters(ParameterList& out, const std::string& prefix) const {
  if (!proto_gate_.empty()) proto_gate_.front().collect_parameters(out, prefix + "proto_gate.");
  if (!feature_gate_.empty()) feature_gate_.front().collect_parameters(out, prefix + "feature_gate.");
}

}  // namespace mop
