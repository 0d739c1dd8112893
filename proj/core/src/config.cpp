// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mop/error.hpp"

namespace mop {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

std::array<std::size_t, 4> to_stage_list(const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != 4) throw ConfigError("expected 4 comma-separated stage values");
  std::array<std::size_t, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = to_uint(items[i]);
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void RunConfig::validate() const {
  require(lr > 0.0, "lr must be positive");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(iterations >= 1, "iterations must be at least 1");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(K >= 1, "K must be at least 1");
  require(D >= 1, "D must be at least 1");
  require(tau > 0.0, "tau must be positive");
  require(momentum >= 0.0 && momentum <= 1.0, "momentum must lie in [0, 1]");
  require(epsilon > 0.0, "epsilon must be positive");
  require(sinkhorn_iters >= 1, "sinkhorn_iters must be at least 1");
  require(groups >= 1, "groups must be at least 1");
  require(D % groups == 0, "D must be divisible by groups");
  require(poly_power >= 0.0, "poly_power must be non-negative");
  require(wavelengths.empty() || wavelengths.size() == groups, "wavelengths needs one entry per band");
  scale.validate();
  try {
    model_config().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.encoder = EncoderConfig::for_bands(groups, D);
  m.encoder.depths = stage_depths;
  if (stage_channels) m.encoder.channels = *stage_channels;
  m.encoder.strides = stage_strides;
  m.per_class = K;
  m.temperature = tau;
  m.momentum = momentum;
  m.variant = variant;
  m.prototype_update = prototype_update;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.optimizer.learning_rate = lr;
  t.optimizer.weight_decay = weight_decay;
  t.optimizer.poly_power = poly_power;
  t.optimizer.total_steps = iterations;
  t.lambda = lambda;
  t.sinkhorn.epsilon = epsilon;
  t.sinkhorn.iterations = sinkhorn_iters;
  t.batch_size = batch_size;
  t.seed = seed;
  return t;
}

RunConfig parse_config_text(std::string_view text) {
  RunConfig c;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"lr", [&](const std::string& v) { c.lr = to_double(v); }},
      {"batch_size", [&](const std::string& v) { c.batch_size = to_uint(v); }},
      {"weight_decay", [&](const std::string& v) { c.weight_decay = to_double(v); }},
      {"iterations", [&](const std::string& v) { c.iterations = to_uint(v); }},
      {"lambda", [&](const std::string& v) { c.lambda = to_double(v); }},
      {"K", [&](const std::string& v) { c.K = to_uint(v); }},
      {"D", [&](const std::string& v) { c.D = to_uint(v); }},
      {"tau", [&](const std::string& v) { c.tau = to_double(v); }},
      {"momentum", [&](const std::string& v) { c.momentum = to_double(v); }},
      {"epsilon", [&](const std::string& v) { c.epsilon = to_double(v); }},
      {"sinkhorn_iters", [&](const std::string& v) { c.sinkhorn_iters = to_uint(v); }},
      {"groups", [&](const std::string& v) { c.groups = to_uint(v); }},
      {"poly_power", [&](const std::string& v) { c.poly_power = to_double(v); }},
      {"seed", [&](const std::string& v) { c.seed = to_uint(v); }},
      {"stage_depths", [&](const std::string& v) { c.stage_depths = to_stage_list(v); }},
      {"stage_channels", [&](const std::string& v) { c.stage_channels = to_stage_list(v); }},
      {"stage_strides", [&](const std::string& v) { c.stage_strides = to_stage_list(v); }},
      {"variant",
       [&](const std::string& v) {
         auto parsed = Variant::parse(v);
         if (!parsed) throw ConfigError("unknown variant '" + v + "'");
         c.variant = *parsed;
       }},
      {"prototype_update",
       [&](const std::string& v) {
         if (v == "momentum") c.prototype_update = PrototypeUpdate::kMomentum;
         else if (v == "gradient") c.prototype_update = PrototypeUpdate::kGradient;
         else throw ConfigError("prototype_update must be 'momentum' or 'gradient'");
       }},
      {"train_data", [&](const std::string& v) { c.train_data = v; }},
      {"eval_data", [&](const std::string& v) { c.eval_data = v; }},
      {"scale_small", [&](const std::string& v) { c.scale.small = to_double(v); }},
      {"scale_large", [&](const std::string& v) { c.scale.large = to_double(v); }},
      {"wavelengths",
       [&](const std::string& v) {
         c.wavelengths.clear();
         for (const auto& item : split_list(v)) c.wavelengths.push_back(to_double(item));
       }},
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace mop
