// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "mop/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "mop/error.hpp"
#include "mop/io.hpp"

namespace mop {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'P', 'C'};
constexpr const char* kArchName = "meta.arch";

void put_u32(std::vector<std::uint8_t>& out, std::uint64_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError("checkpoint field does not fit in 32 bits");
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("MOPC checkpoint truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// meta.arch layout: bands, D, classes, per_class, depths[4], channels[4],
// strides[4], band_split, prototypes, feature_router, proto_router,
// prototype_update, temperature, momentum.
constexpr std::size_t kArchLength = 23;

Tensor encode_arch(const ModelConfig& c) {
  std::vector<double> v;
  v.push_back(static_cast<double>(c.encoder.bands));
  v.push_back(static_cast<double>(c.encoder.feature_dim));
  v.push_back(static_cast<double>(c.classes));
  v.push_back(static_cast<double>(c.per_class));
  for (auto x : c.encoder.depths) v.push_back(static_cast<double>(x));
  for (auto x : c.encoder.channels) v.push_back(static_cast<double>(x));
  for (auto x : c.encoder.strides) v.push_back(static_cast<double>(x));
  v.push_back(c.variant.band_split);
  v.push_back(c.variant.prototypes);
  v.push_back(c.variant.feature_router);
  v.push_back(c.variant.proto_router);
  v.push_back(c.prototype_update == PrototypeUpdate::kGradient ? 1.0 : 0.0);
  v.push_back(c.temperature);
  v.push_back(c.momentum);
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::size_t arch_count(double v) {
  if (!(v >= 0.0) || v > 1e7 || v != std::floor(v)) throw FormatError("meta.arch: bad integer field");
  return static_cast<std::size_t>(v);
}

ModelConfig decode_arch(const Tensor& t) {
  if (t.rank() != 1 || t.size() != kArchLength) throw FormatError("meta.arch: unexpected length");
  auto v = t.data();
  std::size_t i = 0;
  ModelConfig c;
  c.encoder.bands = arch_count(v[i++]);
  c.encoder.feature_dim = arch_count(v[i++]);
  c.classes = arch_count(v[i++]);
  c.per_class = arch_count(v[i++]);
  for (auto& x : c.encoder.depths) x = arch_count(v[i++]);
  for (auto& x : c.encoder.channels) x = arch_count(v[i++]);
  for (auto& x : c.encoder.strides) x = arch_count(v[i++]);
  c.variant.band_split = v[i++] != 0.0;
  c.variant.prototypes = v[i++] != 0.0;
  c.variant.feature_router = v[i++] != 0.0;
  c.variant.proto_router = v[i++] != 0.0;
  c.prototype_update = v[i++] != 0.0 ? PrototypeUpdate::kGradient : PrototypeUpdate::kMomentum;
  c.temperature = v[i++];
  c.momentum = v[i++];
  try {
    c.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("meta.arch: ") + e.what());
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, tensors.size());
  for (const auto& nt : tensors) {
    put_u32(out, nt.name.size());
    out.insert(out.end(), nt.name.begin(), nt.name.end());
    put_u32(out, nt.tensor.rank());
    for (auto e : nt.tensor.shape()) put_u32(out, e);
    for (double x : nt.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("not a MOPC checkpoint");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported MOPC version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = r.u32();
    auto name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("MOPC tensor rank too large");
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& e : shape) {
      e = r.u32();
      n *= e;
      if (n > r.remaining()) throw FormatError("MOPC checkpoint truncated");
    }
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& x : data) {
      const float f = std::bit_cast<float>(r.u32());
      if (!std::isfinite(f)) throw FormatError("MOPC tensor holds a non-finite value");
      x = f;
    }
    out.push_back({std::string(name.begin(), name.end()), Tensor(std::move(shape), std::move(data))});
  }
  if (!r.done()) throw FormatError("MOPC checkpoint has trailing bytes");
  return out;
}

std::vector<NamedTensor> model_checkpoint(const SegmentationModel& model) {
  std::vector<NamedTensor> out;
  out.push_back({kArchName, encode_arch(model.config())});
  for (auto& nt : model.state_tensors()) out.push_back(nt);
  return out;
}

void save_model(const std::filesystem::path& path, const SegmentationModel& model) {
  write_file(path, encode_checkpoint(model_checkpoint(model)));
}

std::unique_ptr<SegmentationModel> model_from_checkpoint(std::span<const NamedTensor> tensors) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& nt : tensors) {
      if (nt.name == name) return &nt.tensor;
    }
    return nullptr;
  };
  const Tensor* arch = find(kArchName);
  if (!arch) throw FormatError("checkpoint has no meta.arch entry");
  auto model = std::make_unique<SegmentationModel>(decode_arch(*arch), 0);
  for (auto& nt : model->state_tensors()) {
    const Tensor* stored = find(nt.name);
    if (!stored) throw FormatError("checkpoint is missing tensor " + nt.name);
    if (stored->shape() != nt.tensor.shape()) {
      throw FormatError("checkpoint tensor " + nt.name + " has shape " + to_string(stored->shape()) + ", expected " +
                        to_string(nt.tensor.shape()));
    }
    std::copy(stored->data().begin(), stored->data().end(), nt.tensor.mutable_data().begin());
  }
  return model;
}

std::unique_ptr<SegmentationModel> load_model(const std::filesystem::path& path) {
  const auto tensors = decode_checkpoint(read_file(path));
  return model_from_checkpoint(tensors);
}

}  // namespace mop
