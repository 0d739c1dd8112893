// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/consensus.hpp"

#include <cstdio>

#include "mop/error.hpp"

namespace mop {

namespace {

void check_extents(const AnnotationSet& set) {
  const auto& a = set.masks[0];
  for (const auto& m : set.masks) {
    if (m.height != a.height || m.width != a.width || m.pixels.size() != m.area()) {
      throw ShapeError("annotation masks differ in extent");
    }
  }
}

int votes(const AnnotationSet& set, std::size_t i) {
  return (set.masks[0].pixels[i] != 0) + (set.masks[1].pixels[i] != 0) + (set.masks[2].pixels[i] != 0);
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

SegMask majority_vote(const AnnotationSet& set) {
  check_extents(set);
  SegMask out(set.masks[0].height, set.masks[0].width);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = votes(set, i) >= 2 ? 1 : 0;
  return out;
}

std::optional<AgreementStats> agreement_stats(std::span<const AnnotationSet> sets) {
  std::uint64_t by_votes[4] = {0, 0, 0, 0};
  for (const auto& set : sets) {
    check_extents(set);
    for (std::size_t i = 0; i < set.masks[0].pixels.size(); ++i) ++by_votes[votes(set, i)];
  }
  AgreementStats s;
  s.marked = by_votes[1] + by_votes[2] + by_votes[3];
  if (s.marked == 0) return std::nullopt;
  s.gt = by_votes[2] + by_votes[3];
  s.unanimous = ratio(by_votes[3], s.marked);
  s.majority_only = ratio(by_votes[2], s.marked);
  s.single_only = ratio(by_votes[1], s.marked);
  s.gt_unanimous = ratio(by_votes[3], s.gt);
  s.gt_majority = ratio(by_votes[2], s.gt);
  return s;
}

std::string format_agreement(const AgreementStats& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "unanimous (3/3)\t%.2f%%\n"
                "majority only (2/3)\t%.2f%%\n"
                "single annotator (1/3)\t%.2f%%\n"
                "ground truth from unanimous\t%.2f%%\n"
                "ground truth from majority\t%.2f%%\n",
                100.0 * s.unanimous, 100.0 * s.majority_only, 100.0 * s.single_only, 100.0 * s.gt_unanimous,
                100.0 * s.gt_majority);
  return buf;
}

}  // namespace mop
