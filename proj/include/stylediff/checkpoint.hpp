#pragma once

// Checkpoint container (little-endian):
//
//   char[4]  magic "SDCK"
//   u32      version (= 1)
//   u32+N    kind, e.g. "denoiser" or "style_encoder"
//   u32+N    config text, `key = value` lines in sorted key order
//   u32      tensor count
//   per tensor:
//     u32+N  name
//     u32    rows
//     u32    cols
//     f32[rows*cols] row-major values
//
// Strings are u32-length-prefixed UTF-8 without terminator.

#include "stylediff/autograd/nn.hpp"
#include "stylediff/core/binary_io.hpp"
#include "stylediff/core/config_file.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace stylediff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  KeyValueConfig config;
  std::vector<std::pair<std::string, Matrix>> tensors;

  static Checkpoint from_store(std::string kind, KeyValueConfig config, const nn::ParameterStore& store) {
    Checkpoint ck{std::move(kind), std::move(config), {}};
    for (const auto& [name, v] : store.entries()) ck.tensors.emplace_back(name, v.value());
    return ck;
  }

  std::vector<char> serialize() const {
    io::ByteWriter w;
    w.magic("SDCK");
    w.u32(kCheckpointVersion);
    w.string(kind);
    w.string(config.to_string());
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
      w.string(name);
      w.u32(static_cast<std::uint32_t>(m.rows()));
      w.u32(static_cast<std::uint32_t>(m.cols()));
      w.f32_array(m);
    }
    return w.bytes();
  }

  static Checkpoint deserialize(std::vector<char> bytes, const std::string& what = "checkpoint") {
    try {
      io::ByteReader r(std::move(bytes), what);
      r.expect_magic("SDCK");
      const auto version = r.u32();
      if (version != kCheckpointVersion)
        throw CheckpointError(what + ": unsupported version " + std::to_string(version));
      Checkpoint ck;
      ck.kind = r.string();
      ck.config = KeyValueConfig::parse(r.string());
      const auto n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        auto name = r.string();
        const auto rows = r.u32();
        const auto cols = r.u32();
        ck.tensors.emplace_back(std::move(name), r.f32_matrix(rows, cols));
      }
      if (!r.at_end()) throw CheckpointError(what + ": trailing bytes");
      return ck;
    } catch (const DataError& e) {
      throw CheckpointError(e.what());
    }
  }

  void save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }

  static Checkpoint load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
    return deserialize(io::read_file(path), path.string());
  }

  /// Copies tensors into an already-constructed store. Names and shapes must
  /// match one-to-one.
  void load_into(nn::ParameterStore& store, const std::string& expected_kind) const {
    if (kind != expected_kind)
      throw CheckpointError("checkpoint kind '" + kind + "' where '" + expected_kind + "' expected");
    if (tensors.size() != store.entries().size())
      throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                            std::to_string(store.entries().size()));
    for (const auto& [name, m] : tensors) {
      if (!store.contains(name)) throw CheckpointError("checkpoint tensor not in model: " + name);
      auto v = store.get(name);
      if (v.rows() != m.rows() || v.cols() != m.cols())
        throw CheckpointError("shape mismatch for " + name);
      v.mutable_value() = m;
    }
  }
};

}  // namespace stylediff
