// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "mop/error.hpp"
#include "mop/random.hpp"

namespace mop {

void SynthSpec::validate() const {
  if (height == 0 || width == 0 || bands == 0) throw ConfigError("synth: extents must be at least 1");
  if (informative.empty()) throw ConfigError("synth: informative band set is empty");
  for (auto b : informative) {
    if (b >= bands) throw ConfigError("synth: informative band " + std::to_string(b) + " outside [0, d)");
  }
  if (min_blobs > max_blobs) throw ConfigError("synth: min_blobs > max_blobs");
  if (!(min_radius > 0.0) || min_radius > max_radius) throw ConfigError("synth: bad radius range");
  if (2.0 * max_radius > static_cast<double>(std::min(height, width))) {
    throw ConfigError("synth: max_radius does not fit inside the image");
  }
  if (!(min_opacity >= 0.0) || min_opacity > max_opacity || max_opacity > 1.0) {
    throw ConfigError("synth: bad opacity range");
  }
  if (!(noise >= 0.0) || !(shading >= 0.0) || !std::isfinite(signal)) throw ConfigError("synth: bad noise/signal");
  if (!background.empty() && background.size() != bands) throw ConfigError("synth: background needs one level per band");
}

std::vector<double> SynthSpec::background_spectrum() const {
  if (!background.empty()) return background;
  std::vector<double> out(bands);
  for (std::size_t b = 0; b < bands; ++b) out[b] = 0.25 + 0.12 * std::sin(0.7 * static_cast<double>(b) + 0.3);
  return out;
}

bool disc_contains(const Disc& disc, std::size_t y, std::size_t x) {
  const double dy = static_cast<double>(y) + 0.5 - disc.cy;
  const double dx = static_cast<double>(x) + 0.5 - disc.cx;
  return dy * dy + dx * dx <= disc.radius * disc.radius;
}

SynthSample synth_sample(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng(spec.seed, index);
  const std::size_t h = spec.height, w = spec.width, d = spec.bands;

  SynthSample out;
  const std::size_t blobs = spec.min_blobs + rng.index(spec.max_blobs - spec.min_blobs + 1);
  for (std::size_t i = 0; i < blobs; ++i) {
    Disc disc;
    disc.radius = rng.uniform(spec.min_radius, spec.max_radius);
    disc.cy = rng.uniform(disc.radius, static_cast<double>(h) - disc.radius);
    disc.cx = rng.uniform(disc.radius, static_cast<double>(w) - disc.radius);
    disc.opacity = rng.uniform(spec.min_opacity, spec.max_opacity);
    out.discs.push_back(disc);
  }

  const auto level = spec.background_spectrum();
  const double gy = rng.uniform(-spec.shading, spec.shading);
  const double gx = rng.uniform(-spec.shading, spec.shading);
  HyperCube bg(h, w, d);
  for (std::size_t b = 0; b < d; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(h) - 0.5;
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(w) - 0.5;
        double v = level[b] * (1.0 + gy * fy + gx * fx);
        if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
        bg.at(b, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  // Overlapping discs combine like stacked translucent layers.
  SegMask mask(h, w);
  std::vector<double> alpha(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double clear = 1.0;
      for (const auto& disc : out.discs) {
        if (disc_contains(disc, y, x)) clear *= 1.0 - disc.opacity;
      }
      alpha[y * w + x] = 1.0 - clear;
      mask.at(y, x) = std::any_of(out.discs.begin(), out.discs.end(),
                                  [&](const Disc& disc) { return disc_contains(disc, y, x); });
    }
  }

  HyperCube cube = bg;
  for (auto b : spec.informative) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (!mask.at(y, x)) continue;
        const double v = cube.at(b, y, x) + spec.signal * alpha[y * w + x];
        cube.at(b, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  char name[32];
  std::snprintf(name, sizeof name, "synth_%05zu", index);
  out.sample.name = name;
  out.sample.cube = std::move(cube);
  out.sample.mask = std::move(mask);
  out.background = std::move(bg);
  return out;
}

std::vector<Sample> synth_generate(const SynthSpec& spec, std::size_t n) {
  if (n == 0) throw ConfigError("synth: sample count must be at least 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sample(spec, i).sample);
  return out;
}

}  // namespace mop
