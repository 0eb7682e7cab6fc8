#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstcn/model.hpp"

namespace mstcn {

// Binary checkpoint, magic "MSTCN001". Layout:
//   magic[8]
//   u64 config length, config bytes (UTF-8 JSON, provenance)
//   u64 tensor count
//   per tensor: u64 name length, name bytes, u64 rank, u64 extents[rank],
//               f32 data (little-endian)
// All integers little-endian unsigned 64-bit.

struct CheckpointEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

namespace ckpt_detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32(std::ostream& os, const std::vector<float>& v) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts only; asserted at build time for this artifact.
  os.write(reinterpret_cast<const char*>(v.data()), v.size() * 4);
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::string& config_json,
                            const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write("MSTCN001", 8);
  ckpt_detail::write_u64(os, config_json.size());
  os.write(config_json.data(), config_json.size());
  ckpt_detail::write_u64(os, entries.size());
  for (const auto& e : entries) {
    ckpt_detail::write_u64(os, e.name.size());
    os.write(e.name.data(), e.name.size());
    ckpt_detail::write_u64(os, e.shape.size());
    for (auto d : e.shape)
      ckpt_detail::write_u64(os, static_cast<std::uint64_t>(d));
    ckpt_detail::write_f32(os, e.data);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

struct Checkpoint {
  std::string config_json;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "MSTCN001", 8) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  Checkpoint ck;
  const auto cfg_len = ckpt_detail::read_u64(is);
  ck.config_json.resize(cfg_len);
  is.read(ck.config_json.data(), cfg_len);
  const auto count = ckpt_detail::read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = ckpt_detail::read_u64(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    const auto rank = ckpt_detail::read_u64(is);
    std::int64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      e.shape.push_back(static_cast<std::int64_t>(ckpt_detail::read_u64(is)));
      n *= e.shape.back();
    }
    e.data.resize(n);
    is.read(reinterpret_cast<char*>(e.data.data()), n * 4);
    if (!is) throw std::runtime_error("truncated checkpoint " + path.string());
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

// Model <-> checkpoint bridging (parameters + batchnorm running buffers).

template <class Real>
std::vector<CheckpointEntry> snapshot_model(LipModel<Real>& model) {
  std::vector<CheckpointEntry> out;
  for (auto& p : model.parameters()) {
    CheckpointEntry e;
    e.name = p.name;
    e.shape = p.tensor.shape();
    e.data.reserve(p.tensor.size());
    for (auto v : p.tensor.data()) e.data.push_back(static_cast<float>(v));
    out.push_back(std::move(e));
  }
  for (auto& [name, buf] : model.buffers()) {
    CheckpointEntry e;
    e.name = name;
    e.shape = {static_cast<std::int64_t>(buf->size())};
    for (auto v : *buf) e.data.push_back(static_cast<float>(v));
    out.push_back(std::move(e));
  }
  // Batchnorm needs its batch counters to honour the eval-before-train error.
  CheckpointEntry tracked;
  tracked.name = "__batches_tracked__";
  tracked.shape = {1};
  tracked.data = {1.0f};
  out.push_back(std::move(tracked));
  return out;
}

template <class Real>
void restore_model(LipModel<Real>& model, const Checkpoint& ck) {
  for (auto& p : model.parameters()) {
    const auto* e = ck.find(p.name);
    if (!e) throw std::runtime_error("checkpoint missing tensor " + p.name);
    if (e->shape != p.tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name +
                               ": " + shape_str(e->shape) + " vs " +
                               shape_str(p.tensor.shape()));
    for (std::int64_t i = 0; i < p.tensor.size(); ++i)
      p.tensor.at(i) = static_cast<Real>(e->data[i]);
  }
  for (auto& [name, buf] : model.buffers()) {
    const auto* e = ck.find(name);
    if (!e) throw std::runtime_error("checkpoint missing buffer " + name);
    buf->resize(e->data.size());
    for (std::size_t i = 0; i < buf->size(); ++i)
      (*buf)[i] = static_cast<Real>(e->data[i]);
  }
  mark_batchnorm_ready(model);
}

// Restored running stats are usable immediately.
template <class Real>
void mark_batchnorm_ready(LipModel<Real>& model) {
  set_tracked(model.frontend.stem_bn);
  for (auto& stage : model.frontend.stages)
    for (auto& blk : stage) {
      set_tracked(blk.bn1);
      set_tracked(blk.bn2);
      if (blk.has_downsample) set_tracked(blk.bn_down);
    }
  for (auto& msb : model.tcn.blocks)
    for (auto& br : msb.branches) {
      set_tracked(br.bn1);
      set_tracked(br.bn2);
    }
}

template <class Real>
void set_tracked(BatchNormLayer<Real>& bn) {
  if (bn.state.batches_tracked == 0) bn.state.batches_tracked = 1;
}

}  // namespace mstcn
