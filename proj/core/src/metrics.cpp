// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/metrics.hpp"

#include <cstdio>

#include "mop/error.hpp"

namespace mop {

namespace {

double ratio_or_one(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string row(const std::string& label, std::size_t images, const ConfusionCounts& c, bool empty) {
  char buf[256];
  if (empty) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t-\t-\n", label.c_str(), images);
  } else {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%.4f\t%.4f\n", label.c_str(), images, c.f1(), c.miou());
  }
  return buf;
}

}  // namespace

double ConfusionCounts::f1() const { return ratio_or_one(2 * tp, 2 * tp + fp + fn); }
double ConfusionCounts::smoke_iou() const { return ratio_or_one(tp, tp + fp + fn); }
double ConfusionCounts::background_iou() const { return ratio_or_one(tn, tn + fp + fn); }
double ConfusionCounts::miou() const { return 0.5 * (smoke_iou() + background_iou()); }

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts confusion(const SegMask& pred, const SegMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("prediction and ground truth differ in extent");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

F1MIoU f1_miou(const SegMask& pred, const SegMask& gt) {
  const auto c = confusion(pred, gt);
  return {c.f1(), c.miou()};
}

const char* bucket_name(ScaleBucket bucket) {
  switch (bucket) {
    case ScaleBucket::kSmall: return "small";
    case ScaleBucket::kMedium: return "medium";
    case ScaleBucket::kLarge: return "large";
  }
  return "?";
}

void ScaleThresholds::validate() const {
  if (!(small > 0.0 && small < large && large < 1.0)) {
    throw ConfigError("scale thresholds must satisfy 0 < small < large < 1");
  }
}

ScaleBucket scale_partition(const SegMask& gt, const ScaleThresholds& t) {
  t.validate();
  if (gt.area() == 0) throw ShapeError("scale_partition: empty mask");
  const double a = static_cast<double>(gt.count()) / static_cast<double>(gt.area());
  if (a < t.small) return ScaleBucket::kSmall;
  if (a < t.large) return ScaleBucket::kMedium;
  return ScaleBucket::kLarge;
}

MetricReport::MetricReport(ScaleThresholds thresholds) : thresholds_(thresholds) { thresholds_.validate(); }

void MetricReport::add(const std::string& name, const SegMask& pred, const SegMask& gt) {
  images_.push_back({name, scale_partition(gt, thresholds_), confusion(pred, gt)});
}

ConfusionCounts MetricReport::pooled(ScaleBucket bucket) const {
  ConfusionCounts c;
  for (const auto& im : images_) {
    if (im.bucket == bucket) c += im.counts;
  }
  return c;
}

ConfusionCounts MetricReport::pooled_total() const {
  ConfusionCounts c;
  for (const auto& im : images_) c += im.counts;
  return c;
}

std::size_t MetricReport::count(ScaleBucket bucket) const {
  std::size_t n = 0;
  for (const auto& im : images_) n += im.bucket == bucket;
  return n;
}

std::string MetricReport::to_tsv() const {
  std::string out = "scale\timages\tF1\tmIoU\n";
  for (auto b : {ScaleBucket::kSmall, ScaleBucket::kMedium, ScaleBucket::kLarge}) {
    out += row(bucket_name(b), count(b), pooled(b), count(b) == 0);
  }
  out += row("total", images_.size(), pooled_total(), images_.empty());
  return out;
}

std::string MetricReport::per_image_tsv() const {
  std::string out = "image\tscale\tF1\tmIoU\n";
  for (const auto& im : images_) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "\t%s\t%.4f\t%.4f\n", bucket_name(im.bucket), im.counts.f1(), im.counts.miou());
    out += im.name + buf;
  }
  return out;
}

}  // namespace mop
