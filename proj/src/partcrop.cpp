#include "pcnn/partcrop.hpp"

#include <algorithm>
#include <cmath>

#include "pcnn/errors.hpp"

namespace pcnn {

namespace {

PartBox clamp_box(PartBox box, int w, int h) {
  PartBox c = box;
  c.x0 = std::clamp(box.x0, 0.0, static_cast<double>(w));
  c.x1 = std::clamp(box.x1, 0.0, static_cast<double>(w));
  c.y0 = std::clamp(box.y0, 0.0, static_cast<double>(h));
  c.y1 = std::clamp(box.y1, 0.0, static_cast<double>(h));
  if (c.x1 > c.x0 && c.y1 > c.y0) return c;
  return box;
}

PartBox hull_box(Part part, const Pose& pose, std::span<const std::size_t> idx, double dilation) {
  PartBox b{part, pose.joints[idx[0]].x, pose.joints[idx[0]].y, pose.joints[idx[0]].x, pose.joints[idx[0]].y};
  for (std::size_t i : idx) {
    const auto& p = pose.joints[i];
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  }
  const double dx = dilation * b.width();
  const double dy = dilation * b.height();
  b.x0 -= dx;
  b.x1 += dx;
  b.y0 -= dy;
  b.y1 += dy;
  return b;
}

}  // namespace

std::vector<PartBox> part_boxes(const Pose& pose, int image_width, int image_height, const BoxConfig& config) {
  pose.validate();
  if (image_width <= 0 || image_height <= 0) throw DimensionError("image dimensions must be positive");
  if (config.hand_scale <= 0.0 || config.body_dilation < 0.0)
    throw ValidationError("hand scale must be positive and body dilation non-negative");

  const bool coincident = std::all_of(pose.joints.begin(), pose.joints.end(),
                                      [&](const Point2& p) { return p == pose.joints.front(); });
  if (coincident) throw DegenerateGeometryError("all pose joints coincide");

  const Point2 head = pose.at(joint::kHead);
  const Point2 hip = pose.at(joint::kHipCenter);
  const double body_scale = std::hypot(head.x - hip.x, head.y - hip.y);
  if (!(body_scale > 0.0)) throw DegenerateGeometryError("head and hip centre coincide");
  const double half = 0.5 * config.hand_scale * body_scale;

  auto hand = [&](Part part, std::string_view wrist_name) {
    const Point2 w = pose.at(wrist_name);
    return PartBox{part, w.x - half, w.y - half, w.x + half, w.y + half};
  };

  std::vector<std::size_t> upper;
  for (auto name : {joint::kHead, joint::kRightShoulder, joint::kLeftShoulder, joint::kRightElbow,
                    joint::kLeftElbow, joint::kRightWrist, joint::kLeftWrist, joint::kHipCenter})
    upper.push_back(pose.index_of(name));
  std::vector<std::size_t> all(pose.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  std::vector<PartBox> boxes;
  boxes.push_back(hand(Part::right_hand, joint::kRightWrist));
  boxes.push_back(hand(Part::left_hand, joint::kLeftWrist));
  boxes.push_back(hull_box(Part::upper_body, pose, upper, config.body_dilation));
  if (config.include_full_body) boxes.push_back(hull_box(Part::full_body, pose, all, config.body_dilation));
  for (auto& b : boxes) {
    if (!(b.width() > 0.0 && b.height() > 0.0))
      throw DegenerateGeometryError(std::string("zero-area ") + std::string(to_string(b.part)) + " box");
    b = clamp_box(b, image_width, image_height);
  }
  boxes.push_back(PartBox{Part::full_image, 0.0, 0.0, static_cast<double>(image_width),
                          static_cast<double>(image_height)});
  return boxes;
}

Patch crop_resize(const Image& image, const PartBox& box, int side) {
  if (side <= 0) throw DimensionError("patch side must be positive");
  if (!(box.width() > 0.0 && box.height() > 0.0)) throw DegenerateGeometryError("crop box has zero area");
  if (image.width <= 0 || image.height <= 0) throw DimensionError("empty image");

  Patch patch{side, std::vector<float>(static_cast<std::size_t>(side) * side * 3, 0.0f)};
  const double sx = box.width() / side;
  const double sy = box.height() / side;
  const int w = image.width;
  const int h = image.height;
  for (int oy = 0; oy < side; ++oy) {
    // Continuous area coordinate of the output pixel centre.
    const double ay = box.y0 + (oy + 0.5) * sy;
    if (ay < 0.0 || ay >= h) continue;
    const double cy = std::clamp(ay - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(cy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = cy - y0;
    for (int ox = 0; ox < side; ++ox) {
      const double ax = box.x0 + (ox + 0.5) * sx;
      if (ax < 0.0 || ax >= w) continue;
      const double cx = std::clamp(ax - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = cx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0, c) + fx * (image.at(x1, y0, c) - image.at(x0, y0, c));
        const double bot = image.at(x0, y1, c) + fx * (image.at(x1, y1, c) - image.at(x0, y1, c));
        patch.data[(static_cast<std::size_t>(oy) * side + ox) * 3 + c] = static_cast<float>(top + fy * (bot - top));
      }
    }
  }
  return patch;
}

}  // namespace pcnn
