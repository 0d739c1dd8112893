// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/encoder.hpp"

#include <cmath>

#include "mop/error.hpp"

namespace mop {

EncoderConfig EncoderConfig::for_bands(std::size_t bands, std::size_t feature_dim) {
  EncoderConfig cfg;
  cfg.bands = bands;
  cfg.feature_dim = feature_dim;
  cfg.channels = {bands * 1, bands * 2, bands * 5, bands * 8};
  return cfg;
}

void EncoderConfig::validate() const {
  if (bands == 0) throw ShapeError("encoder: band count must be positive");
  if (feature_dim == 0 || feature_dim % bands != 0) {
    throw ShapeError("encoder: feature dim " + std::to_string(feature_dim) + " not divisible by " +
                     std::to_string(bands) + " bands");
  }
  for (std::size_t c : channels) {
    if (c == 0 || c % bands != 0) {
      throw ShapeError("encoder: stage width " + std::to_string(c) + " not divisible by " + std::to_string(bands) +
                       " bands");
    }
  }
  for (std::size_t s : strides) {
    if (s == 0) throw ShapeError("encoder: stride must be positive");
  }
}

std::size_t EncoderConfig::total_stride() const {
  std::size_t s = 1;
  for (std::size_t v : strides) s *= v;
  return s;
}

Encoder::Encoder(const EncoderConfig& config, Branch branch, Rng& rng)
    : config_(config), branch_(branch), groups_(branch == Branch::kIndividual ? config.bands : 1) {
  config_.validate();
  std::size_t in = config_.bands;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t width = config_.channels[s];
    Stage stage;
    stage.embed = make_conv(in, width, 3, config_.strides[s], rng);
    stage.norm = make_norm(width);
    for (std::size_t b = 0; b < config_.depths[s]; ++b) {
      stage.blocks.push_back(Block{make_norm(width), make_conv(width, width, 3, 1, rng), make_conv(width, width, 1, 1, rng)});
    }
    stages_.push_back(std::move(stage));
    in = width;
  }
  head_norm_ = make_norm(in);
  projection_ = make_conv(in, config_.feature_dim, 1, 1, rng);
}

Encoder::Conv Encoder::make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng) const {
  const std::size_t cig = in / groups_, cog = out / groups_;
  const double fan_in = static_cast<double>(kernel * kernel * cig);
  Conv conv;
  conv.kernel = random_normal({groups_, kernel, kernel, cig, cog}, std::sqrt(2.0 / fan_in), rng);
  conv.kernel.set_requires_grad(true);
  conv.bias = Tensor({out}, 0.0);
  conv.bias.set_requires_grad(true);
  conv.options = Conv2dOptions{groups_, stride, kernel / 2};
  return conv;
}

Encoder::Norm Encoder::make_norm(std::size_t channels) const {
  Norm norm{Tensor({channels}, 1.0), Tensor({channels}, 0.0)};
  norm.gamma.set_requires_grad(true);
  norm.beta.set_requires_grad(true);
  return norm;
}

Tensor Encoder::apply(const Conv& conv, const Tensor& x) const { return grouped_conv2d(x, conv.kernel, conv.bias, conv.options); }

Tensor Encoder::apply(const Norm& norm, const Tensor& x) const { return group_norm(x, norm.gamma, norm.beta, groups_); }

FeatureMap Encoder::encode(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != config_.bands) {
    throw ShapeError("encoder: expected h x w x " + std::to_string(config_.bands) + " input, got " +
                     to_string(image.shape()));
  }
  Tensor x = image;
  for (const Stage& stage : stages_) {
    x = apply(stage.norm, apply(stage.embed, x));
    for (const Block& block : stage.blocks) {
      Tensor y = apply(block.mix, gelu(apply(block.spatial, apply(block.norm, x))));
      x = add(x, y);
    }
  }
  return FeatureMap{apply(projection_, apply(head_norm_, x)), config_.bands};
}

FeatureMap Encoder::encode(const HyperCube& cube) const {
  if (cube.bands != config_.bands) {
    throw ShapeError("encoder: cube has " + std::to_string(cube.bands) + " bands, encoder expects " +
                     std::to_string(config_.bands));
  }
  return encode(cube.to_tensor());
}

void Encoder::collect_parameters(ParameterList& out, const std::string& prefix) const {
  auto conv = [&](const Conv& c, const std::string& name) {
    out.push_back({prefix + name + ".kernel", c.kernel});
    out.push_back({prefix + name + ".bias", c.bias});
  };
  auto norm = [&](const Norm& n, const std::string& name) {
    out.push_back({prefix + name + ".gamma", n.gamma});
    out.push_back({prefix + name + ".beta", n.beta});
  };
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string st = "stage" + std::to_string(s);
    conv(stages_[s].embed, st + ".embed");
    norm(stages_[s].norm, st + ".norm");
    for (std::size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      const std::string bl = st + ".block" + std::to_string(b);
      norm(stages_[s].blocks[b].norm, bl + ".norm");
      conv(stages_[s].blocks[b].spatial, bl + ".spatial");
      conv(stages_[s].blocks[b].mix, bl + ".mix");
    }
  }
  norm(head_norm_, "head.norm");
  conv(projection_, "head.proj");
}

Tensor flatten_features(const FeatureMap& fm) { return reshape(fm.values, {fm.height() * fm.width(), fm.dim()}); }

FeatureMap unflatten_features(const Tensor& flat, std::size_t height, std::size_t width, std::size_t bands) {
  if (flat.rank() != 2 || flat.dim(0) != height * width) throw ShapeError("unflatten_features: row count != H*W");
  if (flat.dim(1) % bands != 0) throw ShapeError("unflatten_features: D not divisible by bands");
  return FeatureMap{reshape(flat, {height, width, flat.dim(1)}), bands};
}

Tensor band_view(const Tensor& flat, std::size_t band, std::size_t bands) {
  if (flat.rank() != 2 || bands == 0 || flat.dim(1) % bands != 0) throw ShapeError("band_view: D not divisible by bands");
  if (band >= bands) throw ShapeError("band_view: band index out of range");
  const std::size_t per = flat.dim(1) / bands;
  return slice_cols(flat, band * per, (band + 1) * per);
}

}  // namespace mop
