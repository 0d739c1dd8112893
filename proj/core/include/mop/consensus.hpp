// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "mop/cube.hpp"

namespace mop {

/// Three independent binary masks of one frame.
struct AnnotationSet {
  std::array<SegMask, 3> masks;
};

/// Pixel is smoke iff at least two of the three annotators marked it.
/// Throws ShapeError when the masks differ in extent.
SegMask majority_vote(const AnnotationSet& set);

struct AgreementStats {
  // Over pixels marked by at least one annotator.
  double unanimous = 0.0;      // 3 of 3
  double majority_only = 0.0;  // exactly 2 of 3
  double single_only = 0.0;    // exactly 1 of 3
  // Over ground-truth (majority) pixels.
  double gt_unanimous = 0.0;
  double gt_majority = 0.0;

  std::uint64_t marked = 0;
  std::uint64_t gt = 0;
};

/// Pooled over every set. nullopt when no pixel was marked by anyone.
std::optional<AgreementStats> agreement_stats(std::span<const AnnotationSet> sets);

/// Five labelled percentage lines.
std::string format_agreement(const AgreementStats& stats);

}  // namespace mop
