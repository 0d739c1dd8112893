// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "mop/cube.hpp"
#include "mop/encoder.hpp"
#include "mop/parameters.hpp"
#include "mop/prototypes.hpp"
#include "mop/router.hpp"

namespace mop {

/// Which components are switched on. The four named presets are the rows of
/// the component ablation: common branch only, plus band split, plus the
/// feature router, and the full model.
struct Variant {
  bool band_split = true;
  bool prototypes = true;
  bool feature_router = true;
  bool proto_router = true;

  static Variant full() { return {}; }
  static Variant common_only() { return {false, false, false, false}; }
  static Variant split_only() { return {true, false, false, false}; }
  static Variant split_feature_router() { return {true, false, true, false}; }

  /// Accepts "full", "common_only", "split_only", "split_feature_router",
  /// "split_proto" and "split_proto_feature_router".
  static std::optional<Variant> parse(const std::string& name);
  std::string name() const;

  bool operator==(const Variant&) const = default;
};

enum class PrototypeUpdate {
  kMomentum,  // gradient-free EMA of assigned pixel embeddings
  kGradient,  // prototypes trained by the optimizer, renormalised per step
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t classes = 2;
  std::size_t per_class = 3;
  double temperature = 0.1;
  double momentum = 0.999;
  Variant variant;
  PrototypeUpdate prototype_update = PrototypeUpdate::kMomentum;

  void validate() const;
};

/// (X_com + X_MoP) / 2.
FeatureMap fuse(const FeatureMap& common, const FeatureMap& weighted);

struct SegLogits {
  Tensor logits;      // H x W x 2, class 0 background, class 1 smoke
  Tensor smoke_prob;  // H x W
};

/// 1x1 convolution D -> 2 followed by a softmax over the class axis.
class Decoder {
 public:
  Decoder(std::size_t feature_dim, Rng& rng);
  SegLogits decode(const FeatureMap& fused) const;

  Tensor& weight() noexcept { return weight_; }
  Tensor& bias() noexcept { return bias_; }
  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  std::size_t feature_dim_;
  Tensor weight_;  // D x 2
  Tensor bias_;    // 2
};

/// Thresholds the smoke probability at 0.5 and upsamples (nearest) to h x w.
SegMask prediction_mask(const Tensor& smoke_prob, std::size_t height, std::size_t width);

/// Mean binary cross-entropy of the smoke probability against a mask that is
/// already at the probability's resolution.
Tensor ce_loss(const Tensor& smoke_prob, const SegMask& gt);

/// ce + lambda * lp.
Tensor total_loss(const Tensor& ce, const Tensor& lp, double lambda);

struct ModelOutput {
  std::size_t height = 0;  // feature grid
  std::size_t width = 0;
  Tensor x_indi;  // N x D, undefined without band split
  Tensor x_com;   // N x D
  Tensor fused;   // N x D
  SegLogits seg;
  RouteResult route;
};

/// Both encoders, the prototype bank, the dual router and the decoder.
class SegmentationModel {
 public:
  SegmentationModel(const ModelConfig& config, std::uint64_t seed);

  /// Inference and training forward pass. Takes no labels; the prototypes
  /// are read, never written, here.
  ModelOutput forward(const HyperCube& cube) const;
  SegMask predict(const HyperCube& cube) const;

  const ModelConfig& config() const noexcept { return config_; }
  bool has_prototypes() const noexcept { return bank_ != nullptr; }
  PrototypeBank& prototypes();
  const PrototypeBank& prototypes() const;

  /// Leaves the optimizer updates. Prototypes are included only in gradient mode.
  ParameterList trainable_parameters() const;
  /// Every persistent tensor, prototypes included (checkpoint content).
  ParameterList state_tensors() const;

 private:
  ModelConfig config_;
  std::unique_ptr<Encoder> common_;
  std::unique_ptr<Encoder> individual_;
  std::unique_ptr<PrototypeBank> bank_;
  std::unique_ptr<DualRouter> router_;
  std::unique_ptr<Decoder> decoder_;
};

}  // namespace mop
