#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "pcnn/matrix.hpp"
#include "pcnn/pose.hpp"
#include "pcnn/rng.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pcnn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline pcnn::MatrixD random_matrix(pcnn::Rng& rng, std::size_t rows, std::size_t cols, double lo = -1, double hi = 1) {
  pcnn::MatrixD m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline pcnn::Pose make_pose(std::vector<pcnn::Point2> joints) {
  pcnn::Pose p;
  for (std::size_t j = 0; j < joints.size(); ++j) p.joint_names.push_back("j" + std::to_string(j));
  p.joints = std::move(joints);
  return p;
}

// Upright pose in the default joint layout with hip centre at (cx, cy) and
// head-to-hip distance s.
inline pcnn::Pose standing_pose(double cx, double cy, double s) {
  pcnn::Pose p;
  p.joint_names = pcnn::default_joint_names();
  p.joints = {{cx, cy - s},
              {cx - 0.35 * s, cy - 0.75 * s},
              {cx + 0.35 * s, cy - 0.75 * s},
              {cx - 0.45 * s, cy - 0.4 * s},
              {cx + 0.45 * s, cy - 0.4 * s},
              {cx - 0.5 * s, cy - 0.05 * s},
              {cx + 0.5 * s, cy - 0.05 * s},
              {cx, cy},
              {cx - 0.2 * s, cy + s},
              {cx + 0.2 * s, cy + s}};
  return p;
}

}  // namespace testing
