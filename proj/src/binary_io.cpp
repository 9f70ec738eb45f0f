#include "binary_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "retarget/errors.hpp"

namespace retarget::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc) {
  uLong c = crc;
  std::size_t offset = 0;
  // zlib takes uInt lengths.
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    c = ::crc32(c, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::uint32_t crc32(std::string_view bytes, std::uint32_t crc) {
  return crc32(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), crc);
}

void ByteWriter::fixed_string(std::string_view s, std::size_t width) {
  if (s.size() >= width) {
    throw ValidationError("string '" + std::string(s) + "' does not fit a " +
                          std::to_string(width) + "-byte field");
  }
  const std::size_t start = buf_.size();
  buf_.resize(start + width, 0);
  std::memcpy(buf_.data() + start, s.data(), s.size());
}

std::string ByteReader::fixed_string(std::size_t width) {
  need(width);
  const char* p = reinterpret_cast<const char*>(data_.data() + pos_);
  std::size_t len = 0;
  while (len < width && p[len] != '\0') {
    ++len;
  }
  pos_ += width;
  return std::string(p, len);
}

std::string_view ByteReader::text(std::size_t n) {
  need(n);
  std::string_view v(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return v;
}

void ByteReader::seek(std::size_t pos) {
  if (pos > data_.size()) {
    throw TruncatedError(what_ + ": truncated (seek to " + std::to_string(pos) + " of " +
                         std::to_string(data_.size()) + " bytes)");
  }
  pos_ = pos;
}

void ByteReader::need(std::size_t n) const {
  if (n > data_.size() - pos_) {
    throw TruncatedError(what_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                         std::to_string(pos_) + ", file has " + std::to_string(data_.size()) + ")");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open '" + path.string() + "' for reading");
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw ValidationError("cannot open '" + tmp.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw Error("write to '" + tmp.string() + "' failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path,
                    std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace retarget::io
