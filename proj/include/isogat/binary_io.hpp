#pragma once

// Little-endian encoding helpers shared by the SSE and model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "isogat/errors.hpp"

namespace isogat {

class ByteWriter {
 public:
  void raw(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  const std::vector<char>& bytes() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : buf_(std::move(bytes)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return ByteReader(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  }

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  /// Throws FormatError naming `what` unless n more bytes are available.
  void need(std::uint64_t n, const std::string& what) const {
    if (remaining() < n)
      throw FormatError("truncated " + what + ": need " + std::to_string(n) + " bytes, " +
                            std::to_string(remaining()) + " remain",
                        pos_);
  }

  std::string raw(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <typename U>
  U uint(const std::string& what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::uint32_t u32(const std::string& what) { return uint<std::uint32_t>(what); }
  std::uint64_t u64(const std::string& what) { return uint<std::uint64_t>(what); }
  float f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }
  double f64(const std::string& what) { return std::bit_cast<double>(u64(what)); }

  std::string string(const std::string& what) {
    const std::uint32_t len = u32(what + " length");
    return raw(len, what);
  }

 private:
  std::vector<char> buf_;
  std::uint64_t pos_ = 0;
};

}  // namespace isogat
