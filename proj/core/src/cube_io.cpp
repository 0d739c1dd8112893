// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "mop/cube.hpp"
#include "mop/error.hpp"
#include "mop/io.hpp"

namespace mop {

Tensor HyperCube::to_tensor() const {
  Tensor t({height, width, bands});
  auto v = t.mutable_data();
  for (std::size_t b = 0; b < bands; ++b) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) v[(y * width + x) * bands + b] = at(b, y, x);
    }
  }
  return t;
}

std::size_t SegMask::count() const { return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), 1)); }

SegMask resize_nearest(const SegMask& mask, std::size_t height, std::size_t width) {
  if (mask.height == 0 || mask.width == 0 || height == 0 || width == 0) throw ShapeError("resize_nearest: empty extent");
  SegMask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = (2 * y + 1) * mask.height / (2 * height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = (2 * x + 1) * mask.width / (2 * width);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

std::vector<std::uint8_t> band_mean_image(const HyperCube& cube) {
  std::vector<std::uint8_t> out(cube.height * cube.width);
  for (std::size_t y = 0; y < cube.height; ++y) {
    for (std::size_t x = 0; x < cube.width; ++x) {
      double s = 0.0;
      for (std::size_t b = 0; b < cube.bands; ++b) s += cube.at(b, y, x);
      const double mean = cube.bands ? s / static_cast<double>(cube.bands) : 0.0;
      out[y * cube.width + x] = static_cast<std::uint8_t>(std::lround(std::clamp(mean, 0.0, 1.0) * 255.0));
    }
  }
  return out;
}

namespace {

constexpr char kCubeMagic[4] = {'H', 'S', 'C', '1'};
constexpr std::size_t kCubeHeader = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

// Minimal tokenizer for the P5 header: whitespace-separated tokens with
// '#' comments running to end of line.
std::string next_token(std::span<const std::uint8_t> in, std::size_t& pos) {
  for (;;) {
    while (pos < in.size() && std::isspace(in[pos])) ++pos;
    if (pos < in.size() && in[pos] == '#') {
      while (pos < in.size() && in[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < in.size() && !std::isspace(in[pos]) && in[pos] != '#') tok.push_back(static_cast<char>(in[pos++]));
  if (tok.empty()) throw FormatError("PGM header truncated");
  return tok;
}

std::size_t parse_extent(const std::string& tok) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
      tok.size() > 9) {
    throw FormatError("PGM header: bad number '" + tok + "'");
  }
  return std::stoul(tok);
}

std::vector<std::uint8_t> pgm_bytes(std::size_t height, std::size_t width, std::span<const std::uint8_t> payload) {
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_cube(const HyperCube& cube) {
  const std::size_t n = cube.height * cube.width * cube.bands;
  if (cube.values.size() != n) throw ShapeError("encode_cube: value count does not match extents");
  std::vector<std::uint8_t> out(kCubeMagic, kCubeMagic + 4);
  out.reserve(kCubeHeader + 4 * n);
  put_u32(out, checked_u32(cube.height, "cube height"));
  put_u32(out, checked_u32(cube.width, "cube width"));
  put_u32(out, checked_u32(cube.bands, "cube band count"));
  for (float f : cube.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

HyperCube decode_cube(std::span<const std::uint8_t> in) {
  if (in.size() < 4 || !std::equal(kCubeMagic, kCubeMagic + 4, in.begin())) throw FormatError("not an HSC1 file");
  if (in.size() < kCubeHeader) throw FormatError("HSC1 header truncated");
  const std::uint64_t h = get_u32(in, 4), w = get_u32(in, 8), d = get_u32(in, 12);
  if (h == 0 || w == 0 || d == 0) throw FormatError("HSC1 extents must be at least 1");
  // Each factor is < 2^32, so compare against the payload in 128-bit-safe steps.
  const std::uint64_t available = (in.size() - kCubeHeader) / 4;
  if (h * w > available || h * w * d > available) {
    if (h > (1ull << 40) / w || h * w > (1ull << 40) / d) throw FormatError("HSC1 extent overflow");
    throw FormatError("HSC1 payload truncated");
  }
  const std::size_t n = static_cast<std::size_t>(h * w * d);
  if (in.size() != kCubeHeader + 4 * n) throw FormatError("HSC1 payload has trailing bytes");
  HyperCube cube(h, w, d);
  for (std::size_t i = 0; i < n; ++i) {
    const float f = std::bit_cast<float>(get_u32(in, kCubeHeader + 4 * i));
    if (!std::isfinite(f) || f < 0.0f || f > 1.0f) throw FormatError("HSC1 value outside [0, 1]");
    cube.values[i] = f;
  }
  return cube;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void write_cube(const std::filesystem::path& path, const HyperCube& cube) { write_file(path, encode_cube(cube)); }

HyperCube read_cube(const std::filesystem::path& path) { return decode_cube(read_file(path)); }

std::vector<std::uint8_t> encode_mask(const SegMask& mask) {
  if (mask.pixels.size() != mask.area()) throw ShapeError("encode_mask: pixel count does not match extents");
  std::vector<std::uint8_t> payload(mask.pixels.size());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (mask.pixels[i] > 1) throw FormatError("non-binary mask");
    payload[i] = mask.pixels[i] ? 255 : 0;
  }
  return pgm_bytes(mask.height, mask.width, payload);
}

SegMask decode_mask(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  if (next_token(in, pos) != "P5") throw FormatError("not a binary (P5) PGM file");
  const std::size_t width = parse_extent(next_token(in, pos));
  const std::size_t height = parse_extent(next_token(in, pos));
  const std::size_t maxval = parse_extent(next_token(in, pos));
  if (width == 0 || height == 0) throw FormatError("PGM extents must be at least 1");
  if (maxval != 255) throw FormatError("PGM maxval must be 255");
  if (pos >= in.size() || !std::isspace(in[pos])) throw FormatError("PGM header truncated");
  ++pos;
  if (in.size() - pos != width * height) throw FormatError("PGM payload size does not match header");
  SegMask mask(height, width);
  for (std::size_t i = 0; i < width * height; ++i) {
    const std::uint8_t v = in[pos + i];
    if (v != 0 && v != 255) throw FormatError("non-binary mask (pixel value " + std::to_string(v) + ")");
    mask.pixels[i] = v == 255 ? 1 : 0;
  }
  return mask;
}

void write_mask(const std::filesystem::path& path, const SegMask& mask) { write_file(path, encode_mask(mask)); }

SegMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

void write_band_mean_pgm(const std::filesystem::path& path, const HyperCube& cube) {
  write_file(path, pgm_bytes(cube.height, cube.width, band_mean_image(cube)));
}

std::vector<Sample> load_cubes(const std::filesystem::path& dir, bool require_masks) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> cubes;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".hsc") cubes.push_back(entry.path());
  }
  std::sort(cubes.begin(), cubes.end());
  std::vector<Sample> out;
  for (const auto& path : cubes) {
    Sample s;
    s.name = path.stem().string();
    s.cube = read_cube(path);
    auto mask_path = path;
    mask_path.replace_extension(".pgm");
    if (std::filesystem::exists(mask_path)) {
      s.mask = read_mask(mask_path);
      if (s.mask.height != s.cube.height || s.mask.width != s.cube.width) {
        throw FormatError("mask " + mask_path.string() + " is " + std::to_string(s.mask.height) + "x" +
                          std::to_string(s.mask.width) + " but its cube is " + std::to_string(s.cube.height) + "x" +
                          std::to_string(s.cube.width));
      }
    } else if (require_masks) {
      throw FormatError("missing mask " + mask_path.string());
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw FormatError("no .hsc cubes in " + dir.string());
  return out;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) { return load_cubes(dir, true); }

void save_sample(const std::filesystem::path& dir, const Sample& sample) {
  std::filesystem::create_directories(dir);
  write_cube(dir / (sample.name + ".hsc"), sample.cube);
  write_mask(dir / (sample.name + ".pgm"), sample.mask);
}

}  // namespace mop
