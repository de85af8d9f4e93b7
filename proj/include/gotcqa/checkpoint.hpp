#pragma once

// Named-parameter checkpoint container. Layout (little-endian):
//
//   "GCKP" | u32 version
//   u32 meta_count   { str key | str value }*
//   u32 tensor_count { str name | u8 dtype | u32 rank | u64 dim* }*
//   payloads, in header order, row-major
//
// str = u32 byte length + bytes; dtype 2 = float64 (the only one written).
// See docs/checkpoint_format.md.

#include <map>
#include <string>
#include <vector>

#include "gotcqa/binary_io.hpp"
#include "gotcqa/error.hpp"
#include "gotcqa/nn.hpp"

namespace gotcqa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<CheckpointEntry> tensors;
};

inline Checkpoint snapshot(const ParameterStore& store, std::map<std::string, std::string> meta = {}) {
  Checkpoint ck{std::move(meta), {}};
  for (const auto& p : store.params())
    ck.tensors.push_back({p.name, p.tensor.shape(), std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  binary::Writer w;
  w.raw("GCKP");
  w.uint(kCheckpointVersion);
  w.uint(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  w.uint(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.str(t.name);
    w.uint(std::uint8_t{2});
    w.uint(static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) w.uint(static_cast<std::uint64_t>(dim));
  }
  for (const auto& t : ck.tensors)
    for (double v : t.values) w.f64(v);
  w.save(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto r = binary::Reader::from_file(path, Errc::FormatError);
  if (r.raw(4) != "GCKP") fail(Errc::FormatError, "'" + path + "' is not a checkpoint");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) fail(Errc::FormatError, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto meta_count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    auto k = r.str();
    ck.meta[k] = r.str();
  }
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str();
    if (r.uint<std::uint8_t>() != 2) fail(Errc::FormatError, "tensor '" + e.name + "' has an unsupported dtype");
    const auto rank = r.uint<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
    ck.tensors.push_back(std::move(e));
  }
  for (auto& t : ck.tensors) {
    t.values.resize(shape_size(t.shape));
    for (auto& v : t.values) v = r.f64();
  }
  if (r.remaining() != 0) fail(Errc::FormatError, "trailing bytes after checkpoint payload");
  return ck;
}

/// Copies checkpoint values into `store`; names and shapes must agree exactly.
inline void restore(ParameterStore& store, const Checkpoint& ck) {
  auto& params = store.params();
  if (params.size() != ck.tensors.size())
    fail(Errc::CheckpointMismatch, "checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model has " +
                                       std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ck.tensors[i];
    auto& dst = params[i];
    if (src.name != dst.name || src.shape != dst.tensor.shape())
      fail(Errc::CheckpointMismatch, "checkpoint tensor '" + src.name + "' " + shape_string(src.shape) + " does not match '" +
                                         dst.name + "' " + shape_string(dst.tensor.shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto out = params[i].tensor.mutable_data();
    std::copy(ck.tensors[i].values.begin(), ck.tensors[i].values.end(), out.begin());
  }
}

}  // namespace gotcqa
