// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mop/error.hpp"
#include "mop/ops.hpp"
#include "mop/tape.hpp"

namespace mop {

AdamW::AdamW(ParameterList params, const OptimizerConfig& config) : params_(std::move(params)), config_(config) {
  for (const NamedTensor& p : params_) {
    first_.emplace_back(p.tensor.size(), 0.0);
    second_.emplace_back(p.tensor.size(), 0.0);
  }
}

double AdamW::learning_rate(std::size_t step) const {
  if (config_.total_steps == 0) return config_.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(config_.total_steps));
  return config_.learning_rate * std::pow(1.0 - progress, config_.poly_power);
}

void AdamW::step(std::size_t step) {
  const double lr = learning_rate(step);
  const double t = static_cast<double>(step + 1);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const std::vector<double> g = p.grad();
    auto v = p.mutable_data();
    auto& m1 = first_[i];
    auto& m2 = second_[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      m1[j] = config_.beta1 * m1[j] + (1.0 - config_.beta1) * g[j];
      m2[j] = config_.beta2 * m2[j] + (1.0 - config_.beta2) * g[j] * g[j];
      v[j] -= lr * config_.weight_decay * v[j];
      v[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + config_.eps);
    }
  }
  zero_grad();
}

void AdamW::zero_grad() {
  for (NamedTensor& p : params_) p.tensor.zero_grad();
}

std::string format_step(const StepReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu, %.9g, %.9g, %.9g", r.step, r.ce, r.lp, r.total);
  return buf;
}

Trainer::Trainer(SegmentationModel& model, const TrainConfig& config)
    : model_(model),
      config_(config),
      optimizer_(model.trainable_parameters(), config.optimizer),
      sampler_(config.seed, 0x5a3d1e) {
  if (config_.batch_size == 0) throw ConfigError("trainer: batch size must be positive");
  if (config_.lambda < 0.0) throw ConfigError("trainer: lambda must be non-negative");
}

namespace {

// Pixels of one class in one band, pooled over the batch.
struct ClassBandPool {
  std::vector<double> rows;                                    // n x m, row-major
  std::vector<std::pair<std::size_t, std::size_t>> origin;    // (sample, pixel)
};

}  // namespace

StepReport Trainer::train_step(std::span<const Sample* const> batch) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const ModelConfig& mc = model_.config();
  const bool use_protos = model_.has_prototypes();
  const std::size_t bands = mc.encoder.bands;
  const std::size_t classes = mc.classes, per_class = mc.per_class;
  const std::size_t m = mc.encoder.channels_per_band();

  StepReport report;
  report.step = step_;

  GradTape tape;
  std::vector<ModelOutput> outputs;
  std::vector<SegMask> labels;
  Tensor ce;
  Tensor lp = Tensor::scalar(0.0);
  std::vector<std::vector<std::vector<std::size_t>>> positives;  // [sample][band][pixel]
  std::vector<std::vector<ClassBandPool>> pools;                  // [class][band]
  std::vector<std::vector<std::vector<std::size_t>>> pool_assignment;
  try {
    for (const Sample* s : batch) {
      if (s->cube.height != s->mask.height || s->cube.width != s->mask.width) {
        throw ShapeError("train_step: mask " + s->name + " does not match its cube");
      }
      outputs.push_back(model_.forward(s->cube));
      const ModelOutput& out = outputs.back();
      labels.push_back(resize_nearest(s->mask, out.height, out.width));
      const Tensor ce_i = ce_loss(out.seg.smoke_prob, labels.back());
      ce = ce.defined() ? add(ce, ce_i) : ce_i;
    }
    ce = scale(ce, 1.0 / static_cast<double>(batch.size()));
    report.ce = ce.item();

    if (use_protos) {
      const PrototypeBank& bank = model_.prototypes();
      // Normalised band features on the tape, one N x m matrix per (sample, band).
      std::vector<std::vector<Tensor>> normalized(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t b = 0; b < bands; ++b) {
          normalized[i].push_back(l2_normalize_rows(band_view(outputs[i].x_indi, b, bands)));
        }
      }
      pools.assign(classes, std::vector<ClassBandPool>(bands));
      pool_assignment.assign(classes, std::vector<std::vector<std::size_t>>(bands));
      positives.assign(batch.size(), std::vector<std::vector<std::size_t>>(bands));
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t n = labels[i].area();
        for (std::size_t b = 0; b < bands; ++b) {
          positives[i][b].assign(n, 0);
          const auto f = normalized[i][b].data();
          for (std::size_t p = 0; p < n; ++p) {
            ClassBandPool& pool = pools[labels[i].pixels[p]][b];
            pool.rows.insert(pool.rows.end(), f.begin() + p * m, f.begin() + (p + 1) * m);
            pool.origin.emplace_back(i, p);
          }
        }
      }
      for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t b = 0; b < bands; ++b) {
          ClassBandPool& pool = pools[c][b];
          const Tensor features({pool.origin.size(), m}, pool.rows);
          const auto assignment = sinkhorn_assign(bank.class_band_matrix(c, b), features, config_.sinkhorn);
          if (!assignment) continue;  // class absent from this batch
          pool_assignment[c][b] = hard_assignment(*assignment);
          for (std::size_t j = 0; j < pool.origin.size(); ++j) {
            const auto [i, p] = pool.origin[j];
            positives[i][b][p] = c * per_class + pool_assignment[c][b][j];
          }
        }
      }
      std::size_t count = 0;
      Tensor lp_sum;
      for (std::size_t b = 0; b < bands; ++b) {
        const Tensor candidates = bank.band_rows(b);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const std::size_t n = labels[i].area();
          const Tensor term =
              scale(prototype_contrastive_loss(normalized[i][b], candidates, positives[i][b], mc.temperature),
                    static_cast<double>(n));
          lp_sum = lp_sum.defined() ? add(lp_sum, term) : term;
          count += n;
        }
      }
      lp = scale(lp_sum, 1.0 / static_cast<double>(count));
      report.lp = lp.item();
    }

    const Tensor total = total_loss(ce, lp, config_.lambda);
    report.total = total.item();
    tape.backward(total);
  } catch (const NumericError& e) {
    throw NumericError("train step " + std::to_string(step_) + ": non-finite loss (ce=" + std::to_string(report.ce) +
                       ", lp=" + std::to_string(report.lp) + "): " + e.what());
  }

  optimizer_.step(step_);

  if (use_protos) {
    PrototypeBank& bank = model_.prototypes();
    if (mc.prototype_update == PrototypeUpdate::kMomentum) {
      for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t b = 0; b < bands; ++b) {
          const ClassBandPool& pool = pools[c][b];
          if (pool.origin.empty()) continue;
          update_prototypes(bank, c, b, Tensor({pool.origin.size(), m}, pool.rows), pool_assignment[c][b]);
        }
      }
    } else {
      bank.renormalize();
    }
  }
  ++step_;
  return report;
}

std::vector<const Sample*> Trainer::next_batch(std::span<const Sample> data) {
  std::vector<const Sample*> batch;
  while (batch.size() < config_.batch_size) {
    if (cursor_ == order_.size()) {
      order_.resize(data.size());
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::shuffle(order_.begin(), order_.end(), sampler_.engine());
      cursor_ = 0;
    }
    batch.push_back(&data[order_[cursor_++]]);
  }
  return batch;
}

void Trainer::fit(std::span<const Sample> data, std::size_t steps, const std::function<void(const StepReport&)>& on_step) {
  if (data.empty()) throw ConfigError("fit: no training samples");
  for (std::size_t s = 0; s < steps; ++s) {
    const auto batch = next_batch(data);
    const StepReport r = train_step(batch);
    if (on_step) on_step(r);
  }
}

}  // namespace mop
