#include "pcnn/flowprep.hpp"

#include <algorithm>
#include <cmath>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn {

namespace {
constexpr std::uint32_t kFlowVersion = 1;
}

FlowField::FlowField(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw DimensionError("flow field dimensions must be positive");
  vx.assign(static_cast<std::size_t>(w) * h, 0.0f);
  vy.assign(static_cast<std::size_t>(w) * h, 0.0f);
}

void FlowField::validate() const {
  if (width <= 0 || height <= 0) throw DimensionError("flow field is empty");
  const auto n = static_cast<std::size_t>(width) * height;
  if (vx.size() != n || vy.size() != n)
    throw DimensionError("flow planes do not match the declared dimensions");
}

std::uint8_t quantize_value(double value, const FlowQuantParams& params) {
  const double mapped = std::round(params.a * value + params.b);
  if (!(mapped >= 0.0)) return 0;  // also catches NaN
  if (mapped >= 255.0) return 255;
  return static_cast<std::uint8_t>(mapped);
}

Image quantize_flow(const FlowField& flow, const FlowQuantParams& params) {
  flow.validate();
  if (params.a == 0.0) throw ValidationError("flow quantization scale must be non-zero");
  Image out(flow.width, flow.height);
  const std::size_t n = flow.vx.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = flow.vx[i];
    const double y = flow.vy[i];
    out.pixels[3 * i + 0] = quantize_value(x, params);
    out.pixels[3 * i + 1] = quantize_value(y, params);
    out.pixels[3 * i + 2] = quantize_value(std::sqrt(x * x + y * y), params);
  }
  return out;
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  flow.validate();
  io::BinaryWriter w;
  w.magic("PFLW");
  w.u32(kFlowVersion);
  w.u32(static_cast<std::uint32_t>(flow.width));
  w.u32(static_cast<std::uint32_t>(flow.height));
  w.f32s(std::span<const float>(flow.vx));
  w.f32s(std::span<const float>(flow.vy));
  io::write_file(path, w.bytes());
}

FlowField read_flow(const std::filesystem::path& path) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PFLW");
  if (r.u32() != kFlowVersion) throw FormatError(path.string() + ": unsupported PFLW version");
  const auto w = r.u32();
  const auto h = r.u32();
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16))
    throw FormatError(path.string() + ": invalid flow dimensions");
  FlowField f;
  f.width = static_cast<int>(w);
  f.height = static_cast<int>(h);
  f.vx = r.f32s(static_cast<std::size_t>(w) * h);
  f.vy = r.f32s(static_cast<std::size_t>(w) * h);
  r.expect_end();
  return f;
}

}  // namespace pcnn
