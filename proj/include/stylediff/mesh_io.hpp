#pragma once

// Mesh-sequence container and Wavefront OBJ export.
//
// Mesh sequence (".sdms", little-endian): "SDMS", u32 version = 1, u32 T,
// u32 N_v, then f32 positions[T][N_v][3].

#include "stylediff/core/binary_io.hpp"
#include "stylediff/face_model.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

namespace stylediff {

inline std::vector<char> serialize_mesh_sequence(const MeshSequence& m) {
  io::ByteWriter w;
  w.magic("SDMS");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.frames()));
  w.u32(static_cast<std::uint32_t>(m.vertex_count()));
  w.f32_array(m.positions);
  return w.bytes();
}

inline MeshSequence deserialize_mesh_sequence(std::vector<char> bytes, const std::string& what = "mesh sequence") {
  io::ByteReader r(std::move(bytes), what);
  r.expect_magic("SDMS");
  const auto version = r.u32();
  if (version != 1) throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto T = r.u32();
  const auto nv = r.u32();
  MeshSequence m{r.f32_matrix(T, 3 * nv)};
  if (!r.at_end()) throw DataError(what + ": trailing bytes");
  return m;
}

inline void save_mesh_sequence(const std::filesystem::path& path, const MeshSequence& m) {
  io::write_file_atomic(path, serialize_mesh_sequence(m));
}

inline MeshSequence load_mesh_sequence(const std::filesystem::path& path) {
  return deserialize_mesh_sequence(io::read_file(path), path.string());
}

/// OBJ text for one N_v x 3 frame with the template's triangles.
inline std::string obj_text(const FaceTemplate& tpl, const Matrix& frame) {
  detail::require<ParameterError>(frame.rows() == tpl.vertex_count() && frame.cols() == 3,
                                  "obj: frame does not match template");
  std::string out;
  out.reserve(static_cast<std::size_t>(frame.rows()) * 40 + tpl.faces.size() * 8);
  char buf[96];
  for (Eigen::Index v = 0; v < frame.rows(); ++v) {
    std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", frame(v, 0), frame(v, 1), frame(v, 2));
    out += buf;
  }
  for (std::size_t f = 0; f + 2 < tpl.faces.size(); f += 3) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", tpl.faces[f] + 1, tpl.faces[f + 1] + 1, tpl.faces[f + 2] + 1);
    out += buf;
  }
  return out;
}

/// Writes frame_00000.obj, frame_00001.obj, ... into `dir`. Returns the
/// number of files written.
inline int export_obj_sequence(const std::filesystem::path& dir, const FaceTemplate& tpl, const MeshSequence& seq) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (Eigen::Index t = 0; t < seq.frames(); ++t) {
    std::snprintf(name, sizeof name, "frame_%05d.obj", static_cast<int>(t));
    io::write_text_atomic(dir / name, obj_text(tpl, seq.frame(t)));
  }
  return static_cast<int>(seq.frames());
}

}  // namespace stylediff
