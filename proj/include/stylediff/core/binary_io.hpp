#pragma once

#include "stylediff/core/errors.hpp"
#include "stylediff/core/types.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace stylediff::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers are little-endian; big-endian hosts are unsupported");

/// Append-only little-endian byte writer.
class ByteWriter {
 public:
  void magic(const char (&tag)[5]) { bytes_.insert(bytes_.end(), tag, tag + 4); }

  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }

  template <class Derived>
  void f32_array(const Eigen::DenseBase<Derived>& m) {
    // Row-major traversal regardless of the argument's storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f32(static_cast<float>(m(r, c)));
  }

  void f32_span(const std::vector<double>& v) {
    for (double x : v) f32(static_cast<float>(x));
  }

  void i32_list(const std::vector<int>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (int x : v) i32(x);
  }

  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  const std::vector<char>& bytes() const { return bytes_; }

 private:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }

  std::vector<char> bytes_;
};

/// Bounds-checked little-endian reader; every overrun raises DataError.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes, std::string what = "container")
      : bytes_(std::move(bytes)), what_(std::move(what)) {}

  void expect_magic(const char (&tag)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, tag, 4) != 0)
      throw DataError(what_ + ": bad magic, expected \"" + std::string(tag, 4) + "\"");
    pos_ += 4;
  }

  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  float f32() { return pod<float>(); }

  Matrix f32_matrix(Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<std::size_t>(rows * cols) * sizeof(float));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f32();
    return m;
  }

  std::vector<double> f32_vector(std::size_t n) {
    need(n * sizeof(float));
    std::vector<double> v(n);
    for (auto& x : v) x = f32();
    return v;
  }

  std::vector<int> i32_list() {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * sizeof(std::int32_t));
    std::vector<int> v(n);
    for (auto& x : v) x = i32();
    return v;
  }

  std::string string() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError(what_ + ": truncated file");
  }

  std::vector<char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a sibling temp file and renames, so readers never observe a
/// partially written artifact.
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

/// Raw little-endian f32 dump (the interchange format for single vectors such
/// as shape parameters).
inline std::vector<double> read_f32_dump(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() % sizeof(float) != 0)
    throw DataError(path.string() + ": size is not a multiple of 4 bytes");
  ByteReader r(std::move(bytes), path.string());
  return r.f32_vector(std::filesystem::file_size(path) / sizeof(float));
}

inline void write_f32_dump(const std::filesystem::path& path, const std::vector<double>& v) {
  ByteWriter w;
  w.f32_span(v);
  write_file_atomic(path, w.bytes());
}

}  // namespace stylediff::io
