#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcnn {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

namespace joint {
inline constexpr std::string_view kHead = "head";
inline constexpr std::string_view kRightShoulder = "right_shoulder";
inline constexpr std::string_view kLeftShoulder = "left_shoulder";
inline constexpr std::string_view kRightElbow = "right_elbow";
inline constexpr std::string_view kLeftElbow = "left_elbow";
inline constexpr std::string_view kRightWrist = "right_wrist";
inline constexpr std::string_view kLeftWrist = "left_wrist";
inline constexpr std::string_view kHipCenter = "hip_center";
}  // namespace joint

// One person's 2-D joint configuration in a single frame.
struct Pose {
  std::vector<Point2> joints;
  std::vector<std::string> joint_names;
  std::optional<double> score;

  std::size_t size() const { return joints.size(); }

  // Index of a named joint; throws ValidationError when absent.
  std::size_t index_of(std::string_view name) const;
  const Point2& at(std::string_view name) const { return joints[index_of(name)]; }

  // J >= 2, finite coordinates, one name per joint.
  void validate() const;
};

struct PoseSequence {
  std::string video_id;
  std::vector<Pose> frames;

  std::size_t length() const { return frames.size(); }

  // T >= 1 and every frame shares the joint layout of frame 0.
  void validate() const;
};

// Canonical joint layout used by the synthetic data and as a CLI default.
std::vector<std::string> default_joint_names();

// Pose text file: a "#joints name1 name2 ..." header, then one line per frame
// holding the frame index followed by x y for every joint.
void write_pose_file(const std::filesystem::path& path, const PoseSequence& seq);
PoseSequence read_pose_file(const std::filesystem::path& path, std::string video_id = {});
PoseSequence parse_pose_text(std::string_view text, std::string video_id = {});

// Body-part regions, in serialization order.
enum class Part : std::uint8_t { right_hand = 0, left_hand = 1, upper_body = 2, full_body = 3, full_image = 4 };

inline constexpr std::array<Part, 5> kAllParts = {Part::right_hand, Part::left_hand, Part::upper_body,
                                                  Part::full_body, Part::full_image};
inline constexpr std::array<Part, 4> kUpperBodyParts = {Part::right_hand, Part::left_hand, Part::upper_body,
                                                        Part::full_image};

enum class Stream : std::uint8_t { appearance = 0, flow = 1 };

std::string_view to_string(Part p);
std::string_view to_string(Stream s);
Part parse_part(std::string_view s);
Stream parse_stream(std::string_view s);
Part part_from_code(std::uint8_t code);
Stream stream_from_code(std::uint8_t code);

// Part list for a given part count: 5 = all parts, 4 = upper-body pose sets.
std::vector<Part> parts_for_count(int count);

}  // namespace pcnn
