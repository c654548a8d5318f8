#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pcnn {

struct ManifestEntry {
  std::string video_id;
  int split = 1;
  bool train = true;
  std::string label;
  // Resource paths, resolved against the manifest's directory. Empty = absent.
  std::filesystem::path pose;
  std::filesystem::path frames;       // directory of NNNN.ppm frames
  std::filesystem::path flow;         // directory of NNNN.pflw fields
  std::filesystem::path descriptors;  // local descriptor set (PLDS)
};

// Tab-separated: header "video_id split set label pose frames flow descriptors",
// set is "train" or "test", "-" marks an absent path.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  // (video_id, split) pairs are unique and every entry has a label.
  void validate() const;

  std::vector<int> splits() const;
  std::vector<const ManifestEntry*> select(int split, bool train) const;

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index);
std::filesystem::path flow_path(const std::filesystem::path& dir, std::size_t index);

}  // namespace pcnn
