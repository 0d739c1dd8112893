// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mop/cube.hpp"
#include "mop/ops.hpp"
#include "mop/parameters.hpp"
#include "mop/random.hpp"
#include "mop/tensor.hpp"

namespace mop {

struct EncoderConfig {
  std::size_t bands = 25;
  std::size_t feature_dim = 250;
  std::array<std::size_t, 4> depths{2, 2, 2, 2};
  std::array<std::size_t, 4> channels{25, 50, 125, 200};
  std::array<std::size_t, 4> strides{2, 2, 1, 1};

  /// Stage widths of bands x {1, 2, 5, 8}; equals the 25-band defaults at d = 25.
  static EncoderConfig for_bands(std::size_t bands, std::size_t feature_dim);

  /// Throws ShapeError unless D and every stage width divide by the band count.
  void validate() const;
  std::size_t total_stride() const;
  std::size_t channels_per_band() const { return feature_dim / bands; }
};

/// H x W x D activations. Band b owns channels [b * D/d, (b + 1) * D/d).
struct FeatureMap {
  Tensor values;
  std::size_t bands = 1;

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
  std::size_t dim() const { return values.dim(2); }
  std::size_t per_band() const { return dim() / bands; }
  std::pair<std::size_t, std::size_t> band_channels(std::size_t band) const {
    return {band * per_band(), (band + 1) * per_band()};
  }
};

enum class Branch {
  kCommon,      // groups = 1, mixes all bands
  kIndividual,  // groups = d, strict per-band isolation
};

/// Convolutional stack shared by both branches; only the group count differs.
///
/// Each stage is a strided 3x3 patch embedding followed by `depth` residual
/// blocks (norm, 3x3 conv, GELU, 1x1 conv). A final norm and 1x1 projection
/// produce D channels. In the individual branch every conv and every norm
/// uses groups = d, so no value ever crosses a band boundary.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Branch branch, Rng& rng);

  FeatureMap encode(const Tensor& image) const;
  FeatureMap encode(const HyperCube& cube) const;

  std::size_t groups() const noexcept { return groups_; }
  Branch branch() const noexcept { return branch_; }
  const EncoderConfig& config() const noexcept { return config_; }

  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  struct Conv {
    Tensor kernel;
    Tensor bias;
    Conv2dOptions options;
  };
  struct Norm {
    Tensor gamma;
    Tensor beta;
  };
  struct Block {
    Norm norm;
    Conv spatial;
    Conv mix;
  };
  struct Stage {
    Conv embed;
    Norm norm;
    std::vector<Block> blocks;
  };

  Conv make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng) const;
  Norm make_norm(std::size_t channels) const;
  Tensor apply(const Conv& conv, const Tensor& x) const;
  Tensor apply(const Norm& norm, const Tensor& x) const;

  EncoderConfig config_;
  Branch branch_;
  std::size_t groups_;
  std::vector<Stage> stages_;
  Norm head_norm_;
  Conv projection_;
};

/// N x D view of a feature map (N = H * W); row-major so this is a reshape.
Tensor flatten_features(const FeatureMap& fm);
FeatureMap unflatten_features(const Tensor& flat, std::size_t height, std::size_t width, std::size_t bands);
/// N x (D/d) slice of a flattened feature matrix owned by `band`.
Tensor band_view(const Tensor& flat, std::size_t band, std::size_t bands);

}  // namespace mop
