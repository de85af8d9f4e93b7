#pragma once

// Little-endian primitive encoding shared by the feature and checkpoint files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "gotcqa/error.hpp"

namespace gotcqa::binary {

class Writer {
 public:
  template <typename UInt>
  void uint(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  const std::vector<char>& bytes() const { return bytes_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot open '" + path + "' for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) fail(Errc::IoError, "short write to '" + path + "'");
  }

 private:
  std::vector<char> bytes_;
};

/// Bounds-checked reader; running past the end throws `error_code`.
class Reader {
 public:
  Reader(std::vector<char> bytes, Errc error_code) : bytes_(std::move(bytes)), code_(error_code) {}

  static Reader from_file(const std::string& path, Errc error_code) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(bytes), error_code);
  }

  template <typename UInt>
  UInt uint() {
    need(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
      v |= static_cast<UInt>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(UInt);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(uint<std::uint32_t>()); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      fail(code_, "truncated input: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", have " +
                      std::to_string(bytes_.size() - pos_));
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  Errc code_;
};

}  // namespace gotcqa::binary
