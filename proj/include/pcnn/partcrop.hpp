#pragma once

#include <span>
#include <vector>

#include "pcnn/image.hpp"
#include "pcnn/pose.hpp"

namespace pcnn {

struct PartBox {
  Part part = Part::full_image;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool operator==(const PartBox&) const = default;
};

struct BoxConfig {
  // Hand squares have side hand_scale * |head - hip_center|.
  double hand_scale = 0.5;
  // Body boxes grow by this fraction of their own width/height on each side.
  double body_dilation = 0.1;
  // Upper-body-only pose sets drop the full_body box.
  bool include_full_body = true;

  static BoxConfig uniform(double scale_factor) { return {scale_factor, scale_factor, true}; }
};

// Boxes in fixed order [right_hand, left_hand, upper_body, (full_body,) full_image].
// Each box is clamped to the frame; a box that would lose all its area to the
// clamp is kept unclamped so the crop zero-pads it instead.
std::vector<PartBox> part_boxes(const Pose& pose, int image_width, int image_height, const BoxConfig& config = {});

// side x side x 3 floats in [0, 255], interleaved.
struct Patch {
  int side = 0;
  std::vector<float> data;

  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * side + x) * 3 + c]; }
};

// Bilinear resample of the box onto a side x side grid. Sample points are
// pixel centres; points inside the frame interpolate with edge clamping and
// points outside the frame read zero.
Patch crop_resize(const Image& image, const PartBox& box, int side = 224);

}  // namespace pcnn
