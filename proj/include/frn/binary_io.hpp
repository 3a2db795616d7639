#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "frn/errors.hpp"

namespace frn {

static_assert(std::endian::native == std::endian::little,
              "binary containers are written in host order; big-endian hosts are not supported");

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

/// Little-endian byte sink.
class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  /// Appends CRC32 of everything written so far.
  void put_crc() { put<std::uint32_t>(crc32(bytes_.data(), bytes_.size())); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  void write_file(const std::string& path) const;

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader that reports the failing byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  static ByteReader from_file(const std::string& path);

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  /// Verifies the trailing CRC32 over all preceding bytes and hides it from
  /// further reads.
  void check_crc();

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return limit() - pos_; }

 private:
  std::size_t limit() const { return crc_checked_ ? bytes_.size() - 4 : bytes_.size(); }
  void need(std::size_t n, const char* what) const {
    if (n > limit() - pos_)
      throw IoError(std::string("truncated while reading ") + what, pos_);
  }

  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  bool crc_checked_ = false;
};

}  // namespace frn
