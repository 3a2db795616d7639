#include "frn/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace frn {

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing", 0);
  out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw IoError("write to '" + path + "' failed", bytes_.size());
}

ByteReader ByteReader::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'", 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(bytes));
}

void ByteReader::check_crc() {
  if (bytes_.size() < 4) throw IoError("file too short for CRC trailer", 0);
  const std::size_t at = bytes_.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes_.data() + at, 4);
  if (stored != crc32(bytes_.data(), at)) throw IoError("CRC32 mismatch", at);
  crc_checked_ = true;
}

}  // namespace frn
