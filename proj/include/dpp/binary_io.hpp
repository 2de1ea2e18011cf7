#pragma once

// Little-endian primitives for the DP* binary file family. All formats share
// the layout: 4-byte ASCII magic, u32 version, then format-specific fields.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dpp::binio {

inline constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void magic(std::string_view tag);
  void u32(std::uint32_t v);
  void i32(std::int32_t v);
  void f32(float v);
  /// Narrows each value to f32.
  void f32_array(std::span<const double> values);

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

  /// Writes the buffer to path; IoError on failure.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  /// Reads the whole file; IoError if it cannot be opened.
  static Reader open(const std::filesystem::path& path);
  Reader(std::vector<std::uint8_t> bytes, std::string origin);

  /// FormatError unless the next four bytes equal tag and the version field is supported.
  void expect_header(std::string_view tag);
  std::uint32_t u32();
  std::int32_t i32();
  float f32();
  /// Reads count f32 values widened to double.
  std::vector<double> f32_array(std::size_t count);
  std::vector<std::uint32_t> u32_array(std::size_t count);

  bool at_end() const { return pos_ == buf_.size(); }
  /// FormatError if trailing bytes remain.
  void expect_end() const;
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::string origin_;
};

/// True when the file starts with the given 4-byte tag.
bool has_magic(const std::filesystem::path& path, std::string_view tag);

}  // namespace dpp::binio
