// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mop/cube.hpp"
#include "mop/trainer.hpp"

namespace mop {

// HSC1 cube: "HSC1", u32 h, u32 w, u32 d (little endian), then h*w*d
// little-endian float32 values, band-major. Values must be finite and in [0, 1].
std::vector<std::uint8_t> encode_cube(const HyperCube& cube);
HyperCube decode_cube(std::span<const std::uint8_t> bytes);
void write_cube(const std::filesystem::path& path, const HyperCube& cube);
HyperCube read_cube(const std::filesystem::path& path);

// Binary P5 PGM with maxval 255: 255 <-> 1, 0 <-> 0. Any other byte is an error.
std::vector<std::uint8_t> encode_mask(const SegMask& mask);
SegMask decode_mask(std::span<const std::uint8_t> bytes);
void write_mask(const std::filesystem::path& path, const SegMask& mask);
SegMask read_mask(const std::filesystem::path& path);

/// 8-bit P5 image of the band mean, for looking at cubes.
void write_band_mean_pgm(const std::filesystem::path& path, const HyperCube& cube);

/// Loads every `<name>.hsc` in `dir` with its `<name>.pgm` mask, sorted by
/// name. Throws FormatError if a mask is missing or its extents differ from
/// the cube's.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);
/// Cubes only (for inference); masks are loaded when present.
std::vector<Sample> load_cubes(const std::filesystem::path& dir, bool require_masks);
void save_sample(const std::filesystem::path& dir, const Sample& sample);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mop
