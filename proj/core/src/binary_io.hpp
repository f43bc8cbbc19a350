#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "zscr/error.hpp"

// Little-endian encoders shared by the dataset and checkpoint containers.
namespace zscr::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    const std::uint32_t le = to_le(v);
    bytes(&le, sizeof le);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(const float* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(data, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) f32(data[i]);
    }
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<char>& buffer() const { return buf_; }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

  static Reader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorKind::IoError, "read failed for " + path.string());
    return Reader(std::move(data));
  }

  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(&v, sizeof v);
    return to_le(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void f32s(float* dst, std::size_t n) {
    need(n * sizeof(float));
    if constexpr (std::endian::native == std::endian::little) {
      bytes(dst, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) dst[i] = f32();
    }
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) {
      throw Error(ErrorKind::FormatError, "truncated file: need " + std::to_string(n) + " bytes at offset " +
                                              std::to_string(pos_) + ", have " + std::to_string(buf_.size() - pos_));
    }
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace zscr::binary
