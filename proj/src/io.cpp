#include "pcnn/io.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pcnn/errors.hpp"

namespace pcnn::io {

void BinaryWriter::magic(std::string_view tag) {
  buf_.insert(buf_.end(), tag.begin(), tag.end());
}

void BinaryWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::f32s(std::span<const float> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (float v : values) f32(v);
}

void BinaryWriter::f32s(std::span<const double> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (double v : values) f32(static_cast<float>(v));
}

void BinaryWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

BinaryReader::BinaryReader(std::vector<std::uint8_t> bytes, std::string what)
    : buf_(std::move(bytes)), what_(std::move(what)) {}

void BinaryReader::need(std::size_t n) {
  if (buf_.size() - pos_ < n) throw FormatError(what_ + ": truncated container");
}

void BinaryReader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::string_view(reinterpret_cast<const char*>(buf_.data() + pos_), tag.size()) != tag)
    throw FormatError(what_ + ": bad magic, expected \"" + std::string(tag) + "\"");
  pos_ += tag.size();
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return buf_[pos_++];
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }

std::vector<float> BinaryReader::f32s(std::size_t count) {
  need(4 * count);
  std::vector<float> out(count);
  for (auto& v : out) v = f32();
  return out;
}

std::string BinaryReader::string() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

void BinaryReader::expect_end() {
  if (!at_end()) throw FormatError(what_ + ": trailing bytes after payload");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string format_double(double v) {
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace pcnn::io
