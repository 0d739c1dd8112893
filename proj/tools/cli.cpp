// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>

#include "mop/checkpoint.hpp"
#include "mop/config.hpp"
#include "mop/consensus.hpp"
#include "mop/error.hpp"
#include "mop/gradcheck.hpp"
#include "mop/io.hpp"
#include "mop/metrics.hpp"
#include "mop/synth.hpp"
#include "mop/trainer.hpp"

namespace mop {

namespace {

namespace fs = std::filesystem;

struct SynthArgs {
  std::string out;
  std::size_t count = 16;
  SynthSpec spec;
};

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string data;
  std::string out = "model.mopc";
  std::string log;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string config;
  bool per_image = false;
  bool dump_band_weights = false;
  std::optional<double> scale_small;
  std::optional<double> scale_large;
};

struct VoteArgs {
  std::vector<std::string> masks;
  std::string out;
};

struct StatsArgs {
  std::vector<std::string> masks;
};

struct GradArgs {
  std::size_t seeds = 20;
  std::string op;
  bool verbose = false;
};

fs::path resolve(const fs::path& base_file, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || base_file.empty()) return path;
  return base_file.parent_path() / path;
}

int do_synth(const SynthArgs& a, std::ostream& out) {
  const auto samples = synth_generate(a.spec, a.count);
  for (const auto& s : samples) save_sample(a.out, s);
  out << "wrote " << samples.size() << " samples to " << a.out << "\n";
  return 0;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : parse_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.iterations = *a.steps;
  cfg.validate();
  const fs::path data = a.data.empty() ? resolve(a.config, cfg.train_data) : fs::path(a.data);
  if (data.empty()) throw ConfigError("no training data: set train_data or pass --data");
  const auto samples = load_dataset(data);

  SegmentationModel model(cfg.model_config(), cfg.seed);
  Trainer trainer(model, cfg.train_config());
  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::trunc);
    if (!log_file) throw Error("cannot write log " + a.log);
  }
  std::ostream& log = a.log.empty() ? out : log_file;
  log << "step, ce, lp, total\n";
  trainer.fit(samples, cfg.iterations, [&](const StepReport& r) { log << format_step(r) << "\n"; });
  save_model(a.out, model);
  if (!a.log.empty()) out << "trained " << cfg.iterations << " steps, checkpoint " << a.out << "\n";
  return 0;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : parse_config(a.config);
  if (a.scale_small) cfg.scale.small = *a.scale_small;
  if (a.scale_large) cfg.scale.large = *a.scale_large;
  cfg.scale.validate();
  const auto model = load_model(a.checkpoint);
  const fs::path data = a.data.empty() ? resolve(a.config, cfg.eval_data) : fs::path(a.data);
  if (data.empty()) throw ConfigError("no evaluation data: set eval_data or pass --data");
  const auto samples = load_dataset(data);
  const std::size_t bands = model->config().encoder.bands;
  if (a.dump_band_weights && !model->config().variant.feature_router) {
    throw ConfigError("--dump-band-weights needs a model with a feature router");
  }
  if (a.dump_band_weights && !cfg.wavelengths.empty() && cfg.wavelengths.size() != bands) {
    throw ConfigError("wavelength count does not match the model's band count");
  }

  MetricReport report(cfg.scale);
  std::string weights;
  for (const auto& s : samples) {
    const ModelOutput o = model->forward(s.cube);
    report.add(s.name, prediction_mask(o.seg.smoke_prob, s.cube.height, s.cube.width), s.mask);
    if (!a.dump_band_weights) continue;
    weights += "# " + s.name + "\n";
    const auto beta = o.route.beta.data();
    const std::size_t n = o.route.beta.dim(0);
    for (std::size_t b = 0; b < bands; ++b) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += beta[i * bands + b];
      m /= static_cast<double>(n);
      char buf[96];
      if (cfg.wavelengths.empty()) {
        std::snprintf(buf, sizeof buf, "%zu\t-\t%.6f\n", b, m);
      } else {
        std::snprintf(buf, sizeof buf, "%zu\t%g\t%.6f\n", b, cfg.wavelengths[b], m);
      }
      weights += buf;
    }
  }
  out << report.to_tsv();
  if (a.per_image) out << "\n" << report.per_image_tsv();
  if (a.dump_band_weights) out << "\nband\twavelength\tmean_beta\n" << weights;
  return 0;
}

AnnotationSet read_triple(const std::string& a, const std::string& b, const std::string& c) {
  AnnotationSet set{{read_mask(a), read_mask(b), read_mask(c)}};
  return set;
}

int do_vote(const VoteArgs& a, std::ostream& out) {
  if (a.masks.size() != 3) throw ConfigError("vote takes exactly three masks");
  const SegMask gt = majority_vote(read_triple(a.masks[0], a.masks[1], a.masks[2]));
  write_mask(a.out, gt);
  out << "wrote " << a.out << " (" << gt.count() << " smoke pixels)\n";
  return 0;
}

int do_stats(const StatsArgs& a, std::ostream& out) {
  if (a.masks.empty() || a.masks.size() % 3 != 0) throw ConfigError("stats takes masks in groups of three");
  std::vector<AnnotationSet> sets;
  for (std::size_t i = 0; i < a.masks.size(); i += 3) sets.push_back(read_triple(a.masks[i], a.masks[i + 1], a.masks[i + 2]));
  const auto stats = agreement_stats(sets);
  if (!stats) throw Error("empty union: no pixel was marked by any annotator");
  out << format_agreement(*stats);
  return 0;
}

int do_gradcheck(const GradArgs& a, std::ostream& out) {
  GradCheckOptions opt;
  opt.seeds = a.seeds;
  const auto results = run_gradcheck(opt, a.op);
  std::vector<std::string> order;
  bool ok = true;
  for (const auto& r : results) {
    if (std::find(order.begin(), order.end(), r.op) == order.end()) order.push_back(r.op);
    ok = ok && r.passed;
    if (a.verbose || !r.passed) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s seed %llu rel_error %.3e %s\n", r.op.c_str(),
                    static_cast<unsigned long long>(r.seed), r.relative_error, r.passed ? "ok" : "FAILED");
      out << buf;
    }
  }
  for (const auto& op : order) {
    double worst = 0.0;
    bool op_ok = true;
    for (const auto& r : results) {
      if (r.op != op) continue;
      worst = std::max(worst, r.relative_error);
      op_ok = op_ok && r.passed;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s worst %.3e %s\n", op.c_str(), worst, op_ok ? "PASS" : "FAIL");
    out << buf;
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture-of-prototypes hyperspectral smoke segmentation"};
  app.name("mop");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a planted-signal dataset (.hsc cubes and .pgm masks)");
  s->add_option("-o,--out", synth.out, "Output directory")->required();
  s->add_option("-n,--count", synth.count, "Number of samples")->check(CLI::PositiveNumber);
  s->add_option("--height", synth.spec.height);
  s->add_option("--width", synth.spec.width);
  s->add_option("--bands", synth.spec.bands);
  s->add_option("--informative", synth.spec.informative, "Bands carrying the smoke signal")->delimiter(',');
  s->add_option("--min-blobs", synth.spec.min_blobs);
  s->add_option("--max-blobs", synth.spec.max_blobs);
  s->add_option("--min-radius", synth.spec.min_radius);
  s->add_option("--max-radius", synth.spec.max_radius);
  s->add_option("--min-opacity", synth.spec.min_opacity);
  s->add_option("--max-opacity", synth.spec.max_opacity);
  s->add_option("--signal", synth.spec.signal);
  s->add_option("--noise", synth.spec.noise);
  s->add_option("--seed", synth.spec.seed);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint plus a loss log");
  t->add_option("-c,--config", train.config, "Run configuration file");
  t->add_option("--seed", train.seed, "Override the configured seed");
  t->add_option("--steps", train.steps, "Override the configured iteration count");
  t->add_option("--data", train.data, "Training directory (overrides train_data)");
  t->add_option("-o,--out", train.out, "Checkpoint path");
  t->add_option("--log", train.log, "Loss log path (default: stdout)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint and print the scale-aware metric table");
  e->add_option("-m,--checkpoint", eval.checkpoint, "Checkpoint path")->required();
  e->add_option("--data", eval.data, "Evaluation directory (overrides eval_data)");
  e->add_option("-c,--config", eval.config, "Run configuration (thresholds, wavelengths, eval_data)");
  e->add_flag("--per-image", eval.per_image, "Also print per-image scores");
  e->add_flag("--dump-band-weights", eval.dump_band_weights, "Print per-image mean band weights");
  e->add_option("--scale-small", eval.scale_small);
  e->add_option("--scale-large", eval.scale_large);

  VoteArgs vote;
  auto* v = app.add_subcommand("vote", "Majority-vote three annotator masks into ground truth");
  v->add_option("masks", vote.masks, "Three .pgm masks")->required()->expected(3);
  v->add_option("-o,--out", vote.out, "Output mask")->required();

  StatsArgs stats;
  auto* st = app.add_subcommand("stats", "Annotator agreement over one or more mask triples");
  st->add_option("masks", stats.masks, "Masks, three per frame")->required();

  GradArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks; nonzero exit on failure");
  g->add_option("--seeds", grad.seeds, "Random seeds per op")->check(CLI::PositiveNumber);
  g->add_option("--op", grad.op, "Check one op only");
  g->add_flag("-v,--verbose", grad.verbose, "Print every seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "mop: " << ex.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    if (*s) return do_synth(synth, out);
    if (*t) return do_train(train, out);
    if (*e) return do_eval(eval, out);
    if (*v) return do_vote(vote, out);
    if (*st) return do_stats(stats, out);
    if (*g) return do_gradcheck(grad, out);
  } catch (const std::exception& ex) {
    err << "mop: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace mop
