#include "papp/io.hpp"

#include "papp/errors.hpp"

#include <boost/crc.hpp>

#include <fstream>
#include <iterator>

namespace papp {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint32_t file_crc32(const std::filesystem::path& path) { return crc32(read_file_bytes(path)); }

ByteReader::ByteReader(std::vector<std::uint8_t> bytes, std::string what)
    : bytes_(std::move(bytes)), what_(std::move(what)) {
  if (bytes_.size() < sizeof(std::uint32_t)) throw IoError(what_ + ": file too short");
  end_ = bytes_.size() - sizeof(std::uint32_t);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes_.data() + end_, sizeof(stored));
  if (crc32(std::span(bytes_.data(), end_)) != stored) throw IoError(what_ + ": checksum mismatch");
}

std::string ByteReader::get_string() {
  const auto n = get<std::uint32_t>();
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::expect_magic(const char (&magic)[9]) {
  need(8);
  if (std::memcmp(bytes_.data() + pos_, magic, 8) != 0) throw IoError(what_ + ": bad magic");
  pos_ += 8;
}

void ByteReader::expect_end() const {
  if (pos_ != end_) throw IoError(what_ + ": trailing bytes");
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > end_) throw IoError(what_ + ": truncated");
}

}  // namespace papp
