#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pcnn {

// Interleaved 3-channel byte raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

// Binary PPM (P6, maxval 255) is the repository's lossless raster format.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

}  // namespace pcnn
