// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mop/trainer.hpp"

namespace mop {

/// Planted-signal generator: smoke discs brighten only the informative bands.
struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t bands = 8;
  std::vector<std::size_t> informative{2, 5};
  std::size_t min_blobs = 1;
  std::size_t max_blobs = 2;
  double min_radius = 10.0;
  double max_radius = 18.0;
  double min_opacity = 0.35;
  double max_opacity = 0.7;
  /// Signal added at full opacity in an informative band.
  double signal = 0.5;
  /// Per-band background level; empty selects a smooth default spectrum.
  std::vector<double> background;
  /// Strength of the random linear illumination gradient shared by all bands.
  double shading = 0.2;
  double noise = 0.02;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an empty or out-of-range informative set, radii
  /// that do not fit the image, or inverted ranges.
  void validate() const;
  std::vector<double> background_spectrum() const;
};

struct Disc {
  double cy = 0.0;
  double cx = 0.0;
  double radius = 0.0;
  double opacity = 0.0;
};

/// Pixel (y, x) is inside when its centre lies within the radius.
bool disc_contains(const Disc& disc, std::size_t y, std::size_t x);

struct SynthSample {
  Sample sample;
  std::vector<Disc> discs;
  HyperCube background;  // the cube before any smoke was added (noise included)
};

/// Sample `index` depends only on (spec, index).
SynthSample synth_sample(const SynthSpec& spec, std::size_t index);
std::vector<Sample> synth_generate(const SynthSpec& spec, std::size_t n);

}  // namespace mop
