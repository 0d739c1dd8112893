// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mop/cube.hpp"

namespace mop {

/// Smoke-class confusion counts. Empty denominators score 1.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  double f1() const;
  double smoke_iou() const;
  double background_iou() const;
  double miou() const;
  std::uint64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Throws ShapeError on mismatched extents.
ConfusionCounts confusion(const SegMask& pred, const SegMask& gt);

struct F1MIoU {
  double f1 = 0.0;
  double miou = 0.0;
};
F1MIoU f1_miou(const SegMask& pred, const SegMask& gt);

enum class ScaleBucket { kSmall = 0, kMedium = 1, kLarge = 2 };
const char* bucket_name(ScaleBucket bucket);

/// Smoke-area fraction thresholds: small below `small`, large at or above `large`.
struct ScaleThresholds {
  double small = 0.01;
  double large = 0.10;

  /// Requires 0 < small < large < 1.
  void validate() const;
};

ScaleBucket scale_partition(const SegMask& gt, const ScaleThresholds& thresholds = {});

struct ImageMetrics {
  std::string name;
  ScaleBucket bucket = ScaleBucket::kSmall;
  ConfusionCounts counts;
};

/// Per-image counts plus pooled aggregates per scale bucket.
class MetricReport {
 public:
  explicit MetricReport(ScaleThresholds thresholds = {});

  void add(const std::string& name, const SegMask& pred, const SegMask& gt);

  const std::vector<ImageMetrics>& images() const noexcept { return images_; }
  ConfusionCounts pooled(ScaleBucket bucket) const;
  ConfusionCounts pooled_total() const;
  std::size_t count(ScaleBucket bucket) const;

  /// Header "scale images F1 mIoU" then rows small, medium, large, total.
  /// Empty buckets print "-" for their scores.
  std::string to_tsv() const;
  /// Header "image scale F1 mIoU", one row per image.
  std::string per_image_tsv() const;

 private:
  ScaleThresholds thresholds_;
  std::vector<ImageMetrics> images_;
};

}  // namespace mop
