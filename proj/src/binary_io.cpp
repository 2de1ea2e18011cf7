#include "dpp/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "dpp/error.hpp"

namespace dpp::binio {

void Writer::magic(std::string_view tag) {
  for (char ch : tag) buf_.push_back(static_cast<std::uint8_t>(ch));
  u32(kFormatVersion);
}

void Writer::u32(std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void Writer::i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void Writer::f32_array(std::span<const double> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (double v : values) f32(static_cast<float>(v));
}

void Writer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Reader Reader::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return Reader(std::move(bytes), path.string());
}

Reader::Reader(std::vector<std::uint8_t> bytes, std::string origin)
    : buf_(std::move(bytes)), origin_(std::move(origin)) {}

void Reader::need(std::size_t n) const {
  if (buf_.size() - pos_ < n) {
    throw FormatError("'" + origin_ + "': truncated at byte " + std::to_string(pos_));
  }
}

void Reader::expect_header(std::string_view tag) {
  need(tag.size());
  for (char ch : tag) {
    if (buf_[pos_++] != static_cast<std::uint8_t>(ch)) {
      throw FormatError("'" + origin_ + "': bad magic, expected \"" + std::string(tag) + "\"");
    }
  }
  const std::uint32_t version = u32();
  if (version != kFormatVersion) {
    throw FormatError("'" + origin_ + "': unsupported version " + std::to_string(version));
  }
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
  return v;
}

std::int32_t Reader::i32() { return static_cast<std::int32_t>(u32()); }

float Reader::f32() { return std::bit_cast<float>(u32()); }

std::vector<double> Reader::f32_array(std::size_t count) {
  if (count > (buf_.size() - pos_) / 4) need(buf_.size() - pos_ + 1);
  std::vector<double> out(count);
  for (auto& v : out) v = static_cast<double>(f32());
  return out;
}

std::vector<std::uint32_t> Reader::u32_array(std::size_t count) {
  if (count > (buf_.size() - pos_) / 4) need(buf_.size() - pos_ + 1);
  std::vector<std::uint32_t> out(count);
  for (auto& v : out) v = u32();
  return out;
}

void Reader::expect_end() const {
  if (!at_end()) {
    throw FormatError("'" + origin_ + "': " + std::to_string(buf_.size() - pos_) +
                      " unexpected trailing bytes");
  }
}

bool has_magic(const std::filesystem::path& path, std::string_view tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string head(tag.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in.gcount() == static_cast<std::streamsize>(tag.size()) && head == tag;
}

}  // namespace dpp::binio
