// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mop/tensor.hpp"

namespace mop {

/// h x w x d spectral image stored band-major: (band, row, col).
struct HyperCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> values;

  HyperCube() = default;
  HyperCube(std::size_t h, std::size_t w, std::size_t d) : height(h), width(w), bands(d), values(h * w * d, 0.0f) {}

  float at(std::size_t band, std::size_t y, std::size_t x) const { return values[(band * height + y) * width + x]; }
  float& at(std::size_t band, std::size_t y, std::size_t x) { return values[(band * height + y) * width + x]; }

  /// Channel-last h x w x d copy for the encoders.
  Tensor to_tensor() const;

  bool operator==(const HyperCube&) const = default;
};

/// Binary h x w mask, 1 = smoke, 0 = background.
struct SegMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  SegMask() = default;
  SegMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  std::size_t count() const;
  std::size_t area() const { return height * width; }

  bool operator==(const SegMask&) const = default;
};

/// Nearest-neighbour resize sampling the source at destination pixel centres:
/// src = floor((i + 0.5) * src_extent / dst_extent).
SegMask resize_nearest(const SegMask& mask, std::size_t height, std::size_t width);

/// Band-averaged grayscale rendering (mean over bands, scaled to 0..255).
std::vector<std::uint8_t> band_mean_image(const HyperCube& cube);

}  // namespace mop
