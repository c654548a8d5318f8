#include "pcnn/manifest.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn {

void DatasetManifest::validate() const {
  std::set<std::pair<std::string, int>> seen;
  for (const auto& e : entries) {
    if (e.video_id.empty()) throw ValidationError("manifest entry without a video id");
    if (e.label.empty()) throw ValidationError("manifest entry '" + e.video_id + "' has no label");
    if (!seen.emplace(e.video_id, e.split).second)
      throw ValidationError("video '" + e.video_id + "' listed twice in split " + std::to_string(e.split));
  }
}

std::vector<int> DatasetManifest::splits() const {
  std::set<int> s;
  for (const auto& e : entries) s.insert(e.split);
  return {s.begin(), s.end()};
}

std::vector<const ManifestEntry*> DatasetManifest::select(int split, bool train) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split && e.train == train) out.push_back(&e);
  return out;
}

namespace {
std::string path_field(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty()) return "-";
  std::error_code ec;
  auto rel = std::filesystem::relative(p, base, ec);
  return (ec || rel.empty()) ? p.string() : rel.string();
}
}  // namespace

void DatasetManifest::save(const std::filesystem::path& path) const {
  validate();
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::string out = "video_id\tsplit\tset\tlabel\tpose\tframes\tflow\tdescriptors\n";
  for (const auto& e : entries) {
    out += e.video_id + "\t" + std::to_string(e.split) + "\t" + (e.train ? "train" : "test") + "\t" + e.label + "\t" +
           path_field(base, e.pose) + "\t" + path_field(base, e.frames) + "\t" + path_field(base, e.flow) + "\t" +
           path_field(base, e.descriptors) + "\n";
  }
  io::write_text(path, out);
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  const auto base = path.parent_path();
  DatasetManifest m;
  std::string line;
  bool header = true;
  int line_no = 0;
  auto resolve = [&](const std::string& s) -> std::filesystem::path {
    if (s == "-") return {};
    std::filesystem::path p(s);
    return p.is_absolute() ? p : base / p;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("video_id", 0) == 0) continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    std::string set, pose, frames, flow, desc;
    if (!(ls >> e.video_id >> e.split >> set >> e.label >> pose >> frames >> flow >> desc))
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": expected 8 columns");
    if (set != "train" && set != "test")
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": set must be train or test");
    e.train = set == "train";
    e.pose = resolve(pose);
    e.frames = resolve(frames);
    e.flow = resolve(flow);
    e.descriptors = resolve(desc);
    m.entries.push_back(std::move(e));
  }
  try {
    m.validate();
  } catch (const ValidationError& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
  return m;
}

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%04zu.ppm", index);
  return dir / name;
}

std::filesystem::path flow_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%04zu.pflw", index);
  return dir / name;
}

}  // namespace pcnn
