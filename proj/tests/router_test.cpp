// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mop/encoder.hpp"
#include "mop/error.hpp"
#include "mop/ops.hpp"
#include "mop/router.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mop {
namespace {

using testing::bit_equal;
using testing::expect_near_all;

void fill(Tensor& t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

void randomize(Tensor& t, Rng& rng, double stddev = 0.8) {
  for (auto& x : t.mutable_data()) x = rng.normal(0.0, stddev);
}

TEST(ProtoRoute, SinglePrototypeIsPassedThrough) {
  Rng rng(1);
  ProtoGate gate(3, 2, 1, rng);
  randomize(gate.feature_weight(), rng);
  randomize(gate.prototype_weight(), rng);
  const Tensor x = random_normal({5, 3}, 1.0, rng);
  const Tensor p = random_normal({2, 3}, 1.0, rng);
  const auto r = proto_route(x, p, 2, 1, &gate);
  expect_near_all(r.alpha.data(), std::vector<double>(10, 1.0), 0.0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.aggregated[c][i * 3 + j], p[c * 3 + j]);
}

TEST(ProtoRoute, AlphaOnSimplexPerClass) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    ProtoGate gate(4, 2, 3, rng);
    randomize(gate.feature_weight(), rng, 3.0);
    randomize(gate.prototype_weight(), rng, 3.0);
    randomize(gate.bias(), rng, 3.0);
    const auto r = proto_route(random_normal({7, 4}, 2.0, rng), random_normal({6, 4}, 1.0, rng), 2, 3, &gate);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          EXPECT_GE(r.alpha[i * 6 + c * 3 + k], 0.0);
          s += r.alpha[i * 6 + c * 3 + k];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  }
}

TEST(ProtoRoute, FixedLogitsThreeToOne) {
  Rng rng(3);
  ProtoGate gate(2, 1, 2, rng);
  fill(gate.feature_weight(), 0.0);
  fill(gate.prototype_weight(), 0.0);
  gate.bias().mutable_data()[0] = std::log(3.0);
  gate.bias().mutable_data()[1] = 0.0;
  Tensor p({2, 2}, std::vector<double>{1, 0, 0.6, 0.8});
  const auto r = proto_route(random_normal({3, 2}, 1.0, rng), p, 1, 2, &gate);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.alpha[i * 2], 0.75, 1e-15);
    EXPECT_NEAR(r.alpha[i * 2 + 1], 0.25, 1e-15);
    EXPECT_NEAR(r.aggregated[0][i * 2], 0.75 + 0.25 * 0.6, 1e-15);
    EXPECT_NEAR(r.aggregated[0][i * 2 + 1], 0.25 * 0.8, 1e-15);
  }
}

TEST(FeatureRoute, BetaOnSimplex) {
  Rng rng(4);
  FeatureGate gate(12, 4, 2, true, rng);
  randomize(gate.feature_weight(), rng, 3.0);
  randomize(gate.prototype_weight(), rng, 3.0);
  const Tensor beta = feature_route(random_normal({9, 12}, 2.0, rng), random_normal({9, 24}, 1.0, rng), gate);
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (std::size_t b = 0; b < 4; ++b) {
      EXPECT_GT(beta[i * 4 + b], 0.0);
      s += beta[i * 4 + b];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(FeatureRoute, ZeroGateIsUniform) {
  Rng rng(5);
  FeatureGate gate(15, 5, 2, true, rng);
  fill(gate.feature_weight(), 0.0);
  fill(gate.prototype_weight(), 0.0);
  const Tensor beta = feature_route(random_normal({3, 15}, 1.0, rng), random_normal({3, 30}, 1.0, rng), gate);
  expect_near_all(beta.data(), std::vector<double>(15, 0.2), 1e-15);
}

TEST(FeatureRoute, FixedLogitsOneToFour) {
  Rng rng(6);
  FeatureGate gate(4, 2, 2, false, rng);
  fill(gate.feature_weight(), 0.0);
  gate.bias().mutable_data()[1] = std::log(4.0);
  const Tensor beta = feature_route(random_normal({2, 4}, 1.0, rng), Tensor(), gate);
  expect_near_all(beta.data(), std::vector<double>{0.2, 0.8, 0.2, 0.8}, 1e-15);
}

TEST(FeatureRoute, WrongPrototypeWidthIsAnError) {
  Rng rng(7);
  FeatureGate gate(4, 2, 2, true, rng);
  EXPECT_THROW(feature_route(Tensor({2, 4}), Tensor({2, 4}), gate), ShapeError);
}

TEST(BandWeights, HandExample) {
  Tensor beta({1, 2}, std::vector<double>{0.25, 0.75});
  Tensor x({1, 4}, std::vector<double>{1, 2, 3, 4});
  expect_near_all(apply_band_weights(beta, x).data(), std::vector<double>{0.25, 0.5, 2.25, 3.0}, 0.0);
}

TEST(BandWeights, OneHotMasksOtherBands) {
  Rng rng(8);
  const Tensor x = random_normal({6, 12}, 1.0, rng);
  std::vector<double> b(6 * 3, 0.0);
  for (std::size_t i = 0; i < 6; ++i) b[i * 3 + 1] = 1.0;
  const Tensor y = apply_band_weights(Tensor({6, 3}, b), x);
  for (std::size_t i = 0; i < 72; ++i) {
    const std::size_t c = i % 12;
    if (c >= 4 && c < 8) EXPECT_EQ(y[i], x[i]);
    else EXPECT_EQ(y[i], 0.0);
  }
}

TEST(BandWeights, UniformIsDivisionByBandCount) {
  Rng rng(9);
  for (std::size_t d : {2u, 4u, 8u}) {
    const Tensor x = random_normal({5, d * 3}, 1.0, rng);
    const Tensor y = apply_band_weights(Tensor({5, d}, 1.0 / static_cast<double>(d)), x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i] / static_cast<double>(d));
  }
}

TEST(BandWeights, IndivisibleWidthIsAnError) {
  EXPECT_THROW(apply_band_weights(Tensor({2, 3}), Tensor({2, 4})), ShapeError);
}

TEST(BandWeights, ScalesProportionallyWithBeta) {
  Rng rng(10);
  const Tensor x = random_normal({3, 6}, 1.0, rng);
  Tensor beta({3, 3}, std::vector<double>{0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5});
  const Tensor a = apply_band_weights(beta, x);
  beta.mutable_data()[1] *= 2.0;
  const Tensor b = apply_band_weights(beta, x);
  EXPECT_NEAR(b[2], 2.0 * a[2], 1e-15);
  EXPECT_NEAR(b[3], 2.0 * a[3], 1e-15);
  EXPECT_EQ(b[0], a[0]);
  EXPECT_EQ(b[5], a[5]);
}

RouterConfig toy_config() {
  RouterConfig cfg;
  cfg.bands = 2;
  cfg.feature_dim = 4;
  cfg.classes = 2;
  cfg.per_class = 2;
  return cfg;
}

TEST(DualRoute, ShapePreserved) {
  Rng rng(11);
  for (const auto& v : {std::array<bool, 3>{true, true, true}, std::array<bool, 3>{true, false, true},
                        std::array<bool, 3>{false, false, true}, std::array<bool, 3>{false, false, false}}) {
    RouterConfig cfg;
    cfg.bands = 4;
    cfg.feature_dim = 12;
    cfg.use_prototypes = v[0];
    cfg.use_proto_router = v[1];
    cfg.use_feature_router = v[2];
    DualRouter router(cfg, rng);
    PrototypeBank bank({2, 3, 4, 3, 0.999, 0.1}, rng);
    const Tensor x = random_normal({10, 12}, 1.0, rng);
    EXPECT_EQ(router.route(x, &bank).output.shape(), x.shape());
  }
}

TEST(DualRoute, UniformFeatureGateDividesByBandCount) {
  Rng rng(12);
  RouterConfig cfg;
  cfg.bands = 4;
  cfg.feature_dim = 12;
  DualRouter router(cfg, rng);
  FeatureGate* g = router.feature_gate();
  fill(g->feature_weight(), 0.0);
  fill(g->prototype_weight(), 0.0);
  PrototypeBank bank({2, 3, 4, 3, 0.999, 0.1}, rng);
  const Tensor x = random_normal({8, 12}, 1.0, rng);
  const auto r = router.route(x, &bank);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(r.output[i], x[i] / 4.0);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(DualRoute, MatchesStraightLineOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    DualRouter router(toy_config(), rng);
    ProtoGate* pg = router.proto_gate();
    FeatureGate* fg = router.feature_gate();
    for (Tensor* t : {&pg->feature_weight(), &pg->prototype_weight(), &pg->bias(), &fg->feature_weight(),
                      &fg->prototype_weight(), &fg->bias()}) {
      randomize(*t, rng);
    }
    PrototypeBank bank({2, 2, 2, 2, 0.999, 0.1}, rng);
    const Tensor x = random_normal({4, 4}, 1.0, rng);
    const auto r = router.route(x, &bank);
    std::vector<double> beta;
    const auto want = oracle::dual_route_oracle(values(x), values(bank.values()), values(pg->feature_weight()),
                                        values(pg->prototype_weight()), values(pg->bias()),
                                        values(fg->feature_weight()), values(fg->prototype_weight()),
                                        values(fg->bias()), &beta);
    expect_near_all(r.output.data(), want, 1e-12);
    expect_near_all(r.beta.data(), beta, 1e-12);
  }
}

TEST(DualRoute, FrozenBetaKeepsBandsLocal) {
  Rng rng(13);
  RouterConfig cfg;
  cfg.bands = 3;
  cfg.feature_dim = 9;
  DualRouter router(cfg, rng);
  PrototypeBank bank({2, 3, 3, 3, 0.999, 0.1}, rng);
  const Tensor x = random_normal({6, 9}, 1.0, rng);
  const Tensor beta = router.route(x, &bank).beta;
  Tensor xp = x.detach();
  for (std::size_t i = 0; i < 6; ++i) xp.mutable_data()[i * 9 + 7] += 1.0;  // band 2
  const Tensor a = apply_band_weights(beta, x), b = apply_band_weights(beta, xp);
  for (std::size_t i = 0; i < 54; ++i) {
    if (i % 9 < 6) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
    }
  }
}

TEST(DualRoute, NoFeatureRouterPassesFeaturesThrough) {
  Rng rng(14);
  RouterConfig cfg = toy_config();
  cfg.use_feature_router = false;
  cfg.use_prototypes = false;
  DualRouter router(cfg, rng);
  const Tensor x = random_normal({4, 4}, 1.0, rng);
  EXPECT_TRUE(bit_equal(router.route(x, nullptr).output.data(), x.data()));
}

TEST(DualRoute, BankLayoutMismatchIsAnError) {
  Rng rng(15);
  DualRouter router(toy_config(), rng);
  PrototypeBank wrong({2, 3, 2, 2, 0.999, 0.1}, rng);
  EXPECT_THROW(router.route(Tensor({4, 4}), &wrong), ShapeError);
  EXPECT_THROW(router.route(Tensor({4, 4}), nullptr), ShapeError);
}

}  // namespace
}  // namespace mop
