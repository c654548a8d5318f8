#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcnn::io {

// Little-endian byte sink for the binary containers.
class BinaryWriter {
 public:
  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f32s(std::span<const float> values);
  void f32s(std::span<const double> values);  // narrows each value to float32
  void string(std::string_view s);            // u32 length prefix, raw bytes

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Little-endian reader over an in-memory buffer. Throws FormatError on
// truncation or a magic mismatch; `what` names the container in messages.
class BinaryReader {
 public:
  BinaryReader(std::vector<std::uint8_t> bytes, std::string what);

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  float f32();
  std::vector<float> f32s(std::size_t count);
  std::string string();

  bool at_end() const { return pos_ == buf_.size(); }
  void expect_end();

 private:
  void need(std::size_t n);

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Writes via a temporary sibling and rename so readers never see partial files.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

// Shortest decimal text that round-trips a double.
std::string format_double(double v);

}  // namespace pcnn::io
