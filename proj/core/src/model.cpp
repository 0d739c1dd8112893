// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/model.hpp"

#include "mop/error.hpp"
#include "mop/ops.hpp"

namespace mop {

std::optional<Variant> Variant::parse(const std::string& name) {
  if (name == "full") return full();
  if (name == "common_only") return common_only();
  if (name == "split_only") return split_only();
  if (name == "split_feature_router") return split_feature_router();
  if (name == "split_proto") return Variant{true, true, false, false};
  if (name == "split_proto_feature_router") return Variant{true, true, true, false};
  return std::nullopt;
}

std::string Variant::name() const {
  if (*this == full()) return "full";
  if (*this == common_only()) return "common_only";
  if (*this == split_only()) return "split_only";
  if (*this == split_feature_router()) return "split_feature_router";
  if (*this == Variant{true, true, false, false}) return "split_proto";
  if (*this == Variant{true, true, true, false}) return "split_proto_feature_router";
  return "custom";
}

void ModelConfig::validate() const {
  encoder.validate();
  if (classes != 2) throw ConfigError("model: only the two-class (smoke/background) setting is supported");
  if (per_class == 0) throw ConfigError("model: K must be at least 1");
  if (temperature <= 0.0) throw ConfigError("model: temperature must be positive");
  if (momentum < 0.0 || momentum > 1.0) throw ConfigError("model: momentum must lie in [0, 1]");
  if (!variant.band_split && (variant.prototypes || variant.feature_router || variant.proto_router)) {
    throw ConfigError("model: prototypes and routers require the band-split branch");
  }
  if (variant.proto_router && !variant.prototypes) throw ConfigError("model: the prototype router needs prototypes");
}

FeatureMap fuse(const FeatureMap& common, const FeatureMap& weighted) {
  if (common.values.shape() != weighted.values.shape()) {
    throw ShapeError("fuse: branch shapes differ, " + to_string(common.values.shape()) + " vs " +
                     to_string(weighted.values.shape()));
  }
  return FeatureMap{scale(add(common.values, weighted.values), 0.5), common.bands};
}

Decoder::Decoder(std::size_t feature_dim, Rng& rng)
    : feature_dim_(feature_dim),
      weight_(random_truncated_normal({feature_dim, 2}, 0.02, rng)),
      bias_(Tensor({2}, 0.0)) {
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
}

SegLogits Decoder::decode(const FeatureMap& fused) const {
  if (fused.dim() != feature_dim_) {
    throw ShapeError("decoder: expected " + std::to_string(feature_dim_) + " channels, got " + std::to_string(fused.dim()));
  }
  const std::size_t h = fused.height(), w = fused.width();
  const Tensor flat_logits = add_row(matmul(flatten_features(fused), weight_), bias_);
  const Tensor prob = softmax(flat_logits, 1);
  return SegLogits{reshape(flat_logits, {h, w, 2}), reshape(slice_cols(prob, 1, 2), {h, w})};
}

void Decoder::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_});
  out.push_back({prefix + "bias", bias_});
}

SegMask prediction_mask(const Tensor& smoke_prob, std::size_t height, std::size_t width) {
  if (smoke_prob.rank() != 2) throw ShapeError("prediction_mask: expected an H x W probability map");
  SegMask small(smoke_prob.dim(0), smoke_prob.dim(1));
  const auto p = smoke_prob.data();
  for (std::size_t i = 0; i < p.size(); ++i) small.pixels[i] = p[i] > 0.5 ? 1 : 0;
  return resize_nearest(small, height, width);
}

Tensor ce_loss(const Tensor& smoke_prob, const SegMask& gt) {
  if (smoke_prob.size() != gt.area() || (smoke_prob.rank() == 2 && (smoke_prob.dim(0) != gt.height ||
                                                                    smoke_prob.dim(1) != gt.width))) {
    throw ShapeError("ce_loss: mask " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                     " does not match prediction " + to_string(smoke_prob.shape()));
  }
  std::vector<double> target(gt.pixels.begin(), gt.pixels.end());
  return binary_cross_entropy(smoke_prob, target);
}

Tensor total_loss(const Tensor& ce, const Tensor& lp, double lambda) {
  if (lambda < 0.0) throw ConfigError("total_loss: lambda must be non-negative");
  return add(ce, scale(lp, lambda));
}

SegmentationModel::SegmentationModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const EncoderConfig& ec = config_.encoder;
  common_ = std::make_unique<Encoder>(ec, Branch::kCommon, rng);
  const Variant& v = config_.variant;
  if (v.band_split) individual_ = std::make_unique<Encoder>(ec, Branch::kIndividual, rng);
  if (v.prototypes) {
    PrototypeConfig pc{config_.classes, config_.per_class, ec.bands, ec.channels_per_band(), config_.momentum,
                       config_.temperature};
    bank_ = std::make_unique<PrototypeBank>(pc, rng);
    if (config_.prototype_update == PrototypeUpdate::kGradient) bank_->values().set_requires_grad(true);
  }
  if (v.band_split) {
    RouterConfig rc{ec.bands, ec.feature_dim, config_.classes, config_.per_class, v.prototypes, v.proto_router,
                    v.feature_router};
    router_ = std::make_unique<DualRouter>(rc, rng);
  }
  decoder_ = std::make_unique<Decoder>(ec.feature_dim, rng);
}

ModelOutput SegmentationModel::forward(const HyperCube& cube) const {
  const Tensor image = cube.to_tensor();
  ModelOutput out;
  const FeatureMap com = common_->encode(image);
  out.height = com.height();
  out.width = com.width();
  out.x_com = flatten_features(com);
  FeatureMap fused = com;
  if (individual_) {
    const FeatureMap indi = individual_->encode(image);
    out.x_indi = flatten_features(indi);
    out.route = router_->route(out.x_indi, bank_.get());
    fused = fuse(com, unflatten_features(out.route.output, out.height, out.width, indi.bands));
  }
  out.fused = flatten_features(fused);
  out.seg = decoder_->decode(fused);
  return out;
}

SegMask SegmentationModel::predict(const HyperCube& cube) const {
  return prediction_mask(forward(cube).seg.smoke_prob, cube.height, cube.width);
}

PrototypeBank& SegmentationModel::prototypes() {
  if (!bank_) throw ConfigError("model has no prototype bank in this variant");
  return *bank_;
}

const PrototypeBank& SegmentationModel::prototypes() const {
  if (!bank_) throw ConfigError("model has no prototype bank in this variant");
  return *bank_;
}

ParameterList SegmentationModel::trainable_parameters() const {
  ParameterList out;
  common_->collect_parameters(out, "common.");
  if (individual_) individual_->collect_parameters(out, "individual.");
  if (router_) router_->collect_parameters(out, "router.");
  decoder_->collect_parameters(out, "decoder.");
  if (bank_ && config_.prototype_update == PrototypeUpdate::kGradient) out.push_back({"prototypes", bank_->values()});
  return out;
}

ParameterList SegmentationModel::state_tensors() const {
  ParameterList out = trainable_parameters();
  if (bank_ && config_.prototype_update == PrototypeUpdate::kMomentum) out.push_back({"prototypes", bank_->values()});
  return out;
}

}  // namespace mop
