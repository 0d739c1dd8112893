// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "mop/model.hpp"
#include "mop/parameters.hpp"

namespace mop {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// MOPC layout (all integers u32 little endian):
//   "MOPC" version count
//   count x { name_len name_bytes rank extents[rank] float32_le[volume] }
std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Model weights, prototypes, and a "meta.arch" tensor describing the
/// architecture so `load_model` can rebuild it without the config file.
std::vector<NamedTensor> model_checkpoint(const SegmentationModel& model);
void save_model(const std::filesystem::path& path, const SegmentationModel& model);
std::unique_ptr<SegmentationModel> load_model(const std::filesystem::path& path);
std::unique_ptr<SegmentationModel> model_from_checkpoint(std::span<const NamedTensor> tensors);

}  // namespace mop
