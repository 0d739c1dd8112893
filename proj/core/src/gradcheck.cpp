// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mop/encoder.hpp"
#include "mop/error.hpp"
#include "mop/model.hpp"
#include "mop/ops.hpp"
#include "mop/prototypes.hpp"
#include "mop/random.hpp"
#include "mop/router.hpp"
#include "mop/tape.hpp"

namespace mop {

double gradient_relative_error(GradProblem& problem, double step) {
  std::vector<std::vector<double>> analytic;
  {
    for (auto& t : problem.inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    GradTape tape;
    tape.backward(problem.loss());
    for (auto& t : problem.inputs) analytic.push_back(t.grad());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < problem.inputs.size(); ++i) {
    auto values = problem.inputs[i].mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + step;
      const double up = problem.loss().item();
      values[j] = saved - step;
      const double down = problem.loss().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[i][j] - numeric) * (analytic[i][j] - numeric);
      a2 += analytic[i][j] * analytic[i][j];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

namespace {

// Reduces any output to a scalar with fixed random weights so every output
// element contributes a distinct amount.
std::function<Tensor()> projected(std::function<Tensor()> f, const Shape& shape, Rng& rng) {
  Tensor r = random_uniform(shape, -1.0, 1.0, rng);
  return [f = std::move(f), r] { return sum(mul(f(), r)); };
}

GradProblem conv_problem(Rng& rng, std::size_t stride) {
  const std::size_t groups = 2, cin = 4, cout = 6;
  Tensor x = random_normal({5, 6, cin}, 1.0, rng);
  Tensor k = random_normal({groups, 3, 3, cin / groups, cout / groups}, 0.5, rng);
  Tensor b = random_normal({cout}, 0.5, rng);
  Conv2dOptions opt{groups, stride, 1};
  const Shape out = stride == 1 ? Shape{5, 6, cout} : Shape{3, 3, cout};
  return {{x, k, b}, projected([=] { return grouped_conv2d(x, k, b, opt); }, out, rng)};
}

GradProblem group_norm_problem(Rng& rng) {
  Tensor x = random_normal({3, 4, 6}, 1.0, rng);
  Tensor g = random_uniform({6}, 0.5, 1.5, rng);
  Tensor b = random_normal({6}, 0.5, rng);
  return {{x, g, b}, projected([=] { return group_norm(x, g, b, 3); }, {3, 4, 6}, rng)};
}

GradProblem gelu_problem(Rng& rng) {
  Tensor x = random_normal({4, 5}, 1.5, rng);
  return {{x}, projected([=] { return gelu(x); }, {4, 5}, rng)};
}

GradProblem softmax_problem(Rng& rng) {
  Tensor x = random_normal({3, 4, 5}, 1.0, rng);
  const std::size_t axis = rng.index(3);
  return {{x}, projected([=] { return softmax(x, axis); }, {3, 4, 5}, rng)};
}

GradProblem matmul_problem(Rng& rng) {
  Tensor a = random_normal({4, 3}, 1.0, rng);
  Tensor b = random_normal({3, 5}, 1.0, rng);
  return {{a, b}, projected([=] { return matmul(a, b); }, {4, 5}, rng)};
}

GradProblem mul_add_problem(Rng& rng) {
  Tensor a = random_normal({3, 4}, 1.0, rng);
  Tensor b = random_normal({3, 4}, 1.0, rng);
  Tensor c = random_normal({3, 4}, 1.0, rng);
  return {{a, b, c}, projected([=] { return add(mul(a, b), sub(c, mul(a, a))); }, {3, 4}, rng)};
}

GradProblem log_problem(Rng& rng) {
  Tensor x = random_uniform({3, 4}, 0.2, 2.0, rng);
  return {{x}, projected([=] { return log(x); }, {3, 4}, rng)};
}

GradProblem exp_problem(Rng& rng) {
  Tensor x = random_normal({3, 4}, 1.0, rng);
  return {{x}, projected([=] { return exp(x); }, {3, 4}, rng)};
}

GradProblem mean_problem(Rng& rng) {
  Tensor x = random_normal({3, 4}, 1.0, rng);
  Tensor w = random_normal({3, 4}, 1.0, rng);
  return {{x}, [=] { return mean(mul(mul(x, x), w)); }};
}

GradProblem l2_normalize_problem(Rng& rng) {
  Tensor x = random_normal({5, 4}, 1.0, rng);
  return {{x}, projected([=] { return l2_normalize_rows(x); }, {5, 4}, rng)};
}

GradProblem sinkhorn_problem(Rng& rng) {
  const std::size_t m = 4, k = 3, n = 7;
  Tensor p = random_normal({m, k}, 1.0, rng);
  Tensor x = random_normal({n, m}, 1.0, rng);
  SinkhornOptions opt;
  return {{p, x}, projected(
                      [=] {
                        // Unit-norm inputs keep exp(score / eps) in range, as in training.
                        Tensor pn = transpose(l2_normalize_rows(transpose(p)));
                        return *sinkhorn_assign(pn, l2_normalize_rows(x), opt);
                      },
                      {k, n}, rng)};
}

GradProblem proto_gate_problem(Rng& rng) {
  const std::size_t m = 3, c = 2, k = 2, n = 4;
  Rng init(rng.index(1u << 30));
  ProtoGate gate(m, c, k, init);
  // Larger weights than the default init so the softmax is far from uniform.
  for (Tensor* t : {&gate.feature_weight(), &gate.prototype_weight(), &gate.bias()}) {
    for (auto& v : t->mutable_data()) v = rng.normal(0.0, 0.7);
  }
  Tensor x = random_normal({n, m}, 1.0, rng);
  Tensor p = random_normal({c * k, m}, 1.0, rng);
  return {{x, p, gate.feature_weight(), gate.prototype_weight(), gate.bias()},
          projected([=] { return gate.forward(x, p); }, {n, c * k}, rng)};
}

GradProblem feature_gate_problem(Rng& rng) {
  const std::size_t d = 3, dim = 6, c = 2, n = 4;
  Rng init(rng.index(1u << 30));
  FeatureGate gate(dim, d, c, true, init);
  for (Tensor* t : {&gate.feature_weight(), &gate.prototype_weight(), &gate.bias()}) {
    for (auto& v : t->mutable_data()) v = rng.normal(0.0, 0.7);
  }
  Tensor x = random_normal({n, dim}, 1.0, rng);
  Tensor p = random_normal({n, c * dim}, 1.0, rng);
  return {{x, p, gate.feature_weight(), gate.prototype_weight(), gate.bias()},
          projected([=] { return gate.forward(x, p); }, {n, d}, rng)};
}

GradProblem dual_route_problem(Rng& rng) {
  RouterConfig cfg;
  cfg.bands = 2;
  cfg.feature_dim = 6;
  cfg.classes = 2;
  cfg.per_class = 2;
  Rng init(rng.index(1u << 30));
  auto router = std::make_shared<DualRouter>(cfg, init);
  PrototypeConfig pc{2, 2, 2, 3, 0.999, 0.1};
  auto bank = std::make_shared<PrototypeBank>(pc, init);
  ParameterList params;
  router->collect_parameters(params, "");
  std::vector<Tensor> inputs;
  for (auto& p : params) {
    for (auto& v : p.tensor.mutable_data()) v = rng.normal(0.0, 0.7);
    inputs.push_back(p.tensor);
  }
  Tensor x = random_normal({5, cfg.feature_dim}, 1.0, rng);
  inputs.push_back(x);
  inputs.push_back(bank->values());
  return {inputs, projected([=] { return router->route(x, bank.get()).output; }, {5, cfg.feature_dim}, rng)};
}

GradProblem bce_problem(Rng& rng) {
  Tensor p = random_uniform({4, 5}, 0.05, 0.95, rng);
  std::vector<double> y(20);
  for (auto& v : y) v = static_cast<double>(rng.index(2));
  return {{p}, [=] { return binary_cross_entropy(p, y); }};
}

GradProblem decoder_loss_problem(Rng& rng) {
  // Feature map -> 1x1 decoder -> smoke probability -> mean BCE.
  Rng init(rng.index(1u << 30));
  auto decoder = std::make_shared<Decoder>(6, init);
  for (Tensor* t : {&decoder->weight(), &decoder->bias()}) {
    for (auto& v : t->mutable_data()) v = rng.normal(0.0, 0.5);
  }
  Tensor x = random_normal({3, 3, 6}, 1.0, rng);
  SegMask gt(3, 3);
  for (auto& v : gt.pixels) v = static_cast<std::uint8_t>(rng.index(2));
  return {{x, decoder->weight(), decoder->bias()},
          [=] { return ce_loss(decoder->decode(FeatureMap{x, 2}).smoke_prob, gt); }};
}

GradProblem contrastive_problem(Rng& rng) {
  const std::size_t n = 6, m = 4, ck = 6;
  Tensor x = random_normal({n, m}, 1.0, rng);
  Tensor p = random_normal({ck, m}, 1.0, rng);
  std::vector<std::size_t> pos(n);
  for (auto& v : pos) v = rng.index(ck);
  return {{x, p}, [=] { return prototype_contrastive_loss(l2_normalize_rows(x), l2_normalize_rows(p), pos, 0.1); }};
}

GradProblem total_loss_problem(Rng& rng) {
  Tensor a = random_uniform({3}, 0.1, 0.9, rng);
  Tensor b = random_normal({3}, 1.0, rng);
  std::vector<double> y{1.0, 0.0, 1.0};
  const double lambda = rng.uniform(0.0, 1.0);
  return {{a, b}, [=] { return total_loss(binary_cross_entropy(a, y), mean(exp(b)), lambda); }};
}

GradProblem encoder_problem(Rng& rng) {
  EncoderConfig cfg;
  cfg.bands = 2;
  cfg.feature_dim = 4;
  // Two channels per band: with one, every bias feeding a norm has an exactly
  // zero gradient and the relative error only measures roundoff.
  cfg.depths = {1, 1, 0, 0};
  cfg.channels = {4, 4, 4, 4};
  cfg.strides = {2, 1, 1, 1};
  Rng init(rng.index(1u << 30));
  const Branch branch = rng.index(2) ? Branch::kIndividual : Branch::kCommon;
  auto enc = std::make_shared<Encoder>(cfg, branch, init);
  ParameterList params;
  enc->collect_parameters(params, "");
  std::vector<Tensor> inputs;
  for (auto& p : params) inputs.push_back(p.tensor);
  Tensor x = random_uniform({4, 4, 2}, 0.0, 1.0, rng);
  inputs.push_back(x);
  return {inputs, projected([=] { return enc->encode(x).values; }, {2, 2, 4}, rng)};
}

using Factory = GradProblem (*)(Rng&);

const std::vector<std::pair<std::string, Factory>>& registry() {
  static const std::vector<std::pair<std::string, Factory>> r = {
      {"grouped_conv2d", [](Rng& rng) { return conv_problem(rng, 1); }},
      {"grouped_conv2d_strided", [](Rng& rng) { return conv_problem(rng, 2); }},
      {"group_norm", group_norm_problem},
      {"gelu", gelu_problem},
      {"softmax", softmax_problem},
      {"matmul", matmul_problem},
      {"mul_add", mul_add_problem},
      {"log", log_problem},
      {"exp", exp_problem},
      {"mean", mean_problem},
      {"l2_normalize", l2_normalize_problem},
      {"sinkhorn", sinkhorn_problem},
      {"proto_gate", proto_gate_problem},
      {"feature_gate", feature_gate_problem},
      {"dual_route", dual_route_problem},
      {"bce", bce_problem},
      {"decoder_bce", decoder_loss_problem},
      {"contrastive", contrastive_problem},
      {"total_loss", total_loss_problem},
      {"encoder", encoder_problem},
  };
  return r;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> out;
  for (const auto& [name, f] : registry()) out.push_back(name);
  return out;
}

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options, const std::string& only) {
  std::vector<GradCheckResult> out;
  bool matched = only.empty();
  for (const auto& [name, factory] : registry()) {
    if (!only.empty() && name != only) continue;
    matched = true;
    for (std::size_t s = 0; s < options.seeds; ++s) {
      const std::uint64_t seed = options.first_seed + s;
      Rng rng(seed, 0x9c4e);
      GradProblem problem = factory(rng);
      GradCheckResult r{name, seed, gradient_relative_error(problem, options.step), false};
      r.passed = r.relative_error < options.tolerance;
      out.push_back(r);
    }
  }
  if (!matched) throw ConfigError("gradcheck: unknown op '" + only + "'");
  return out;
}

}  // namespace mop
