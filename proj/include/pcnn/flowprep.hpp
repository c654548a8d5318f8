#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcnn/image.hpp"

namespace pcnn {

// Dense optical flow between two consecutive frames, in pixels/frame.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> vx;  // row-major, width * height
  std::vector<float> vy;

  FlowField() = default;
  FlowField(int w, int h);

  float& u(int x, int y) { return vx[static_cast<std::size_t>(y) * width + x]; }
  float& v(int x, int y) { return vy[static_cast<std::size_t>(y) * width + x]; }
  float u(int x, int y) const { return vx[static_cast<std::size_t>(y) * width + x]; }
  float v(int x, int y) const { return vy[static_cast<std::size_t>(y) * width + x]; }

  // Throws DimensionError unless both planes are width*height with positive dims.
  void validate() const;
};

// Affine byte mapping: byte = clamp(round(a * value + b), 0, 255).
struct FlowQuantParams {
  double a = 16.0;
  double b = 128.0;
};

// Maps one flow value to a byte. Rounds half away from zero before clamping.
std::uint8_t quantize_value(double value, const FlowQuantParams& params);

// Channels are (vx, vy, magnitude); magnitude is taken on the raw flow and
// goes through the same affine map.
Image quantize_flow(const FlowField& flow, const FlowQuantParams& params = {});

// "PFLW" container: magic, version u32, width u32, height u32, then the vx
// plane and the vy plane as row-major float32 LE.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace pcnn
