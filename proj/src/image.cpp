#include "pcnn/image.hpp"

#include <cctype>
#include <string>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn {

Image::Image(int w, int h, std::uint8_t fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw DimensionError("image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h * 3, fill);
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  io::write_file(path, bytes);
}

namespace {

// Reads one whitespace-delimited header integer, skipping '#' comments.
int header_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& name) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError(name + ": malformed PPM header");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > (1L << 24)) throw FormatError(name + ": PPM dimension too large");
  }
  return static_cast<int>(v);
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError(name + ": not a P6 PPM");
  std::size_t pos = 2;
  const int w = header_int(bytes, pos, name);
  const int h = header_int(bytes, pos, name);
  const int maxval = header_int(bytes, pos, name);
  if (maxval != 255) throw FormatError(name + ": only maxval 255 is supported");
  if (w <= 0 || h <= 0) throw FormatError(name + ": empty image");
  ++pos;  // single whitespace byte after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < pos + n) throw FormatError(name + ": truncated pixel data");
  Image img(w, h);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
            bytes.begin() + static_cast<std::ptrdiff_t>(pos + n), img.pixels.begin());
  return img;
}

}  // namespace pcnn
