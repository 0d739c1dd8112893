// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "mop/encoder.hpp"
#include "mop/error.hpp"
#include "mop/tape.hpp"
#include "test_util.hpp"

namespace mop {
namespace {

using testing::bit_equal;

EncoderConfig small_config(std::size_t bands = 4, std::size_t dim = 8) {
  EncoderConfig cfg = EncoderConfig::for_bands(bands, dim);
  cfg.channels = {bands, bands * 2, bands * 2, bands * 2};
  return cfg;
}

HyperCube random_cube(std::size_t h, std::size_t w, std::size_t d, Rng& rng) {
  HyperCube c(h, w, d);
  for (auto& v : c.values) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return c;
}

TEST(EncoderConfig, TwentyFiveBandWidths) {
  const auto cfg = EncoderConfig::for_bands(25, 250);
  EXPECT_EQ(cfg.channels, (std::array<std::size_t, 4>{25, 50, 125, 200}));
  EXPECT_EQ(cfg.depths, (std::array<std::size_t, 4>{2, 2, 2, 2}));
  EXPECT_EQ(cfg.channels_per_band(), 10u);
  EXPECT_EQ(cfg.total_stride(), 4u);
}

TEST(EncoderConfig, RejectsIndivisibleWidths) {
  EXPECT_THROW(EncoderConfig::for_bands(3, 10).validate(), ShapeError);
  auto cfg = EncoderConfig::for_bands(4, 8);
  cfg.channels[2] = 6;
  EXPECT_THROW(cfg.validate(), ShapeError);
}

TEST(IndividualEncoder, TwentyFiveBandsOwnTenChannelsEach) {
  Rng rng(1);
  Encoder enc(EncoderConfig::for_bands(25, 250), Branch::kIndividual, rng);
  EXPECT_EQ(enc.groups(), 25u);
  const auto fm = enc.encode(random_cube(8, 8, 25, rng));
  EXPECT_EQ(fm.dim(), 250u);
  EXPECT_EQ(fm.per_band(), 10u);
  EXPECT_EQ(fm.band_channels(3), (std::pair<std::size_t, std::size_t>{30, 40}));
  EXPECT_EQ(fm.height(), 2u);
}

TEST(IndividualEncoder, ZeroCubeIsDeterministic) {
  Rng rng(2);
  Encoder enc(small_config(), Branch::kIndividual, rng);
  HyperCube zero(16, 16, 4);
  const auto a = enc.encode(zero), b = enc.encode(zero);
  EXPECT_TRUE(bit_equal(a.values.data(), b.values.data()));
}

TEST(IndividualEncoder, BandMismatchIsAnError) {
  Rng rng(3);
  Encoder enc(small_config(), Branch::kIndividual, rng);
  EXPECT_THROW(enc.encode(HyperCube(8, 8, 5)), ShapeError);
}

TEST(IndividualEncoder, PerturbingOneBandChangesOnlyItsChannels) {
  Rng rng(4);
  const auto cfg = small_config(4, 8);
  Encoder enc(cfg, Branch::kIndividual, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const HyperCube cube = random_cube(16, 16, 4, rng);
    const auto base = enc.encode(cube);
    const std::size_t band = rng.index(4);
    HyperCube pert = cube;
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) pert.at(band, y, x) = static_cast<float>(rng.uniform(0.0, 1.0));
    const auto out = enc.encode(pert);
    const auto [lo, hi] = base.band_channels(band);
    bool changed = false;
    for (std::size_t i = 0; i < base.values.size(); ++i) {
      const std::size_t c = i % base.dim();
      if (c >= lo && c < hi) {
        changed = changed || base.values[i] != out.values[i];
      } else {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(base.values[i]), std::bit_cast<std::uint64_t>(out.values[i]));
      }
    }
    EXPECT_TRUE(changed);
  }
}

TEST(IndividualEncoder, GradientIsBandLocal) {
  Rng rng(5);
  Encoder enc(small_config(4, 8), Branch::kIndividual, rng);
  Tensor img = random_cube(8, 8, 4, rng).to_tensor();
  img.set_requires_grad(true);
  for (std::size_t band = 0; band < 4; ++band) {
    img.zero_grad();
    GradTape tape;
    const auto fm = enc.encode(img);
    Tensor flat = flatten_features(fm);
    tape.backward(sum(band_view(flat, band, 4)));
    const auto g = img.grad();
    double own = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i % 4 == band) own += std::abs(g[i]);
      else EXPECT_LE(std::abs(g[i]), 1e-12);
    }
    EXPECT_GT(own, 0.0);
  }
}

TEST(CommonEncoder, ShapeMatchesIndividual) {
  Rng rng(6);
  for (std::size_t bands : {4u, 8u}) {
    const auto cfg = small_config(bands, bands * 3);
    Encoder common(cfg, Branch::kCommon, rng), indi(cfg, Branch::kIndividual, rng);
    const auto cube = random_cube(12, 20, bands, rng);
    EXPECT_EQ(common.encode(cube).values.shape(), indi.encode(cube).values.shape());
    EXPECT_EQ(common.groups(), 1u);
  }
}

TEST(CommonEncoder, FourBandMultispectralConfigRuns) {
  Rng rng(7);
  Encoder enc(EncoderConfig::for_bands(4, 40), Branch::kCommon, rng);
  const auto fm = enc.encode(random_cube(16, 16, 4, rng));
  EXPECT_EQ(fm.dim(), 40u);
}

TEST(CommonEncoder, MixesBands) {
  Rng rng(8);
  Encoder enc(small_config(), Branch::kCommon, rng);
  const auto cube = random_cube(8, 8, 4, rng);
  HyperCube pert = cube;
  pert.at(3, 4, 4) += 0.25f;
  const auto a = enc.encode(cube), b = enc.encode(pert);
  const auto [lo, hi] = a.band_channels(3);
  bool outside = false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const std::size_t c = i % a.dim();
    if ((c < lo || c >= hi) && a.values[i] != b.values[i]) outside = true;
  }
  EXPECT_TRUE(outside);
}

TEST(Flatten, ToyShapes) {
  Tensor v({2, 2, 4}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  FeatureMap fm{v, 2};
  const Tensor flat = flatten_features(fm);
  EXPECT_EQ(flat.shape(), (Shape{4, 4}));
  for (std::size_t b = 0; b < 2; ++b) {
    const Tensor view = band_view(flat, b, 2);
    EXPECT_EQ(view.shape(), (Shape{4, 2}));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(view[i * 2 + j], flat[i * 4 + b * 2 + j]);
  }
  const FeatureMap back = unflatten_features(flat, 2, 2, 2);
  EXPECT_EQ(back.values.shape(), v.shape());
  EXPECT_TRUE(bit_equal(back.values.data(), v.data()));
}

TEST(Flatten, BandViewMatchesIndexArithmetic) {
  Rng rng(9);
  const std::size_t n = 7, d = 5, per = 3, dim = d * per;
  Tensor flat = random_normal({n, dim}, 1.0, rng);
  for (std::size_t b = 0; b < d; ++b) {
    const Tensor view = band_view(flat, b, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < per; ++j) EXPECT_EQ(view[i * per + j], flat[i * dim + b * per + j]);
  }
  EXPECT_THROW(band_view(flat, 5, 5), ShapeError);
  EXPECT_THROW(band_view(flat, 0, 4), ShapeError);
}

}  // namespace
}  // namespace mop
