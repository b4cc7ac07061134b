// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>

#include "vgjepa/common/error.hpp"

// Little-endian primitives shared by the checkpoint and dataset formats.
namespace vgjepa::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void append_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline void append_f32(std::string& out, std::span<const float> v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

inline void append_f32(std::string& out, std::span<const double> v) {
  for (double d : v) {
    const float f = static_cast<float>(d);
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
  }
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t pos = 0) : bytes_(bytes), pos_(pos) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("truncated binary data");
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8).data(), 8);
    return v;
  }
  void f32(std::span<float> out) {
    std::string_view s = take(out.size() * sizeof(float));
    std::memcpy(out.data(), s.data(), s.size());
  }
  std::size_t pos() const noexcept { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  std::string_view bytes_;
  std::size_t pos_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace vgjepa::io
