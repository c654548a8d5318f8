#include "pcnn/pose.hpp"

#include <cmath>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn {

std::size_t Pose::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < joint_names.size(); ++i)
    if (joint_names[i] == name) return i;
  throw ValidationError("pose has no joint named '" + std::string(name) + "'");
}

void Pose::validate() const {
  if (joints.size() < 2) throw ValidationError("pose needs at least two joints");
  if (joint_names.size() != joints.size()) throw ValidationError("joint name count does not match joint count");
  for (const auto& p : joints)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("pose has non-finite joint coordinates");
}

void PoseSequence::validate() const {
  if (frames.empty()) throw ValidationError("pose sequence '" + video_id + "' has no frames");
  for (const auto& f : frames) {
    f.validate();
    if (f.joint_names != frames.front().joint_names)
      throw ValidationError("pose sequence '" + video_id + "' mixes joint layouts");
  }
}

std::vector<std::string> default_joint_names() {
  return {"head",       "right_shoulder", "left_shoulder", "right_elbow", "left_elbow",
          "right_wrist", "left_wrist",    "hip_center",    "right_ankle", "left_ankle"};
}

void write_pose_file(const std::filesystem::path& path, const PoseSequence& seq) {
  seq.validate();
  std::string out = "#joints";
  for (const auto& n : seq.frames.front().joint_names) out += " " + n;
  out += "\n";
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    out += std::to_string(t);
    for (const auto& p : seq.frames[t].joints) out += " " + io::format_double(p.x) + " " + io::format_double(p.y);
    out += "\n";
  }
  io::write_text(path, out);
}

PoseSequence parse_pose_text(std::string_view text, std::string video_id) {
  PoseSequence seq;
  seq.video_id = std::move(video_id);
  std::vector<std::string> names;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line.rfind("#joints", 0) == 0) {
      std::string tag, n;
      ls >> tag;
      names.clear();
      while (ls >> n) names.push_back(n);
      continue;
    }
    if (line[0] == '#') continue;
    if (names.empty()) throw FormatError("pose file: data before '#joints' header");
    long frame = 0;
    if (!(ls >> frame)) throw FormatError("pose file line " + std::to_string(line_no) + ": missing frame index");
    if (frame != static_cast<long>(seq.frames.size()))
      throw FormatError("pose file line " + std::to_string(line_no) + ": frames must be consecutive from 0");
    Pose p;
    p.joint_names = names;
    for (std::size_t j = 0; j < names.size(); ++j) {
      Point2 pt;
      if (!(ls >> pt.x >> pt.y))
        throw FormatError("pose file line " + std::to_string(line_no) + ": expected " +
                          std::to_string(2 * names.size()) + " coordinates");
      p.joints.push_back(pt);
    }
    std::string extra;
    if (ls >> extra) throw FormatError("pose file line " + std::to_string(line_no) + ": trailing values");
    seq.frames.push_back(std::move(p));
  }
  seq.validate();
  return seq;
}

PoseSequence read_pose_file(const std::filesystem::path& path, std::string video_id) {
  if (video_id.empty()) video_id = path.stem().string();
  return parse_pose_text(io::read_text(path), std::move(video_id));
}

std::string_view to_string(Part p) {
  switch (p) {
    case Part::right_hand: return "right_hand";
    case Part::left_hand: return "left_hand";
    case Part::upper_body: return "upper_body";
    case Part::full_body: return "full_body";
    case Part::full_image: return "full_image";
  }
  return "?";
}

std::string_view to_string(Stream s) { return s == Stream::appearance ? "appearance" : "flow"; }

Part parse_part(std::string_view s) {
  for (Part p : kAllParts)
    if (to_string(p) == s) return p;
  throw ValidationError("unknown part '" + std::string(s) + "'");
}

Stream parse_stream(std::string_view s) {
  if (s == "appearance") return Stream::appearance;
  if (s == "flow") return Stream::flow;
  throw ValidationError("unknown stream '" + std::string(s) + "'");
}

Part part_from_code(std::uint8_t code) {
  if (code > 4) throw FormatError("invalid part code " + std::to_string(code));
  return static_cast<Part>(code);
}

Stream stream_from_code(std::uint8_t code) {
  if (code > 1) throw FormatError("invalid stream code " + std::to_string(code));
  return static_cast<Stream>(code);
}

std::vector<Part> parts_for_count(int count) {
  if (count == 5) return {kAllParts.begin(), kAllParts.end()};
  if (count == 4) return {kUpperBodyParts.begin(), kUpperBodyParts.end()};
  throw ValidationError("part count must be 5 (full body) or 4 (upper body only)");
}

}  // namespace pcnn
