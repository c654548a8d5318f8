#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pcnn/kmeans1d.hpp"
#include "pcnn/matrix.hpp"
#include "pcnn/pose.hpp"

// High-level pose features: joint-geometry statistics quantized with
// per-dimension scalar codebooks and pooled into a histogram.
namespace pcnn::hlpf {

struct HlpfConfig {
  int codebook_size = 20;
  int delta_t = 1;  // frame offset for dynamic features
  std::uint64_t seed = 0;
  KMeansInit init = KMeansInit::optimal;

  void validate() const;
};

// Maps an angle difference into (-pi, pi].
double wrap_angle(double radians);

// atan2 with the zero vector mapped to 0 and -pi folded to pi.
double orientation(double dx, double dy);

// Dimension bookkeeping for J joints.
struct FeatureLayout {
  std::size_t joints = 0;

  std::size_t pairs() const { return joints * (joints - 1) / 2; }
  std::size_t inner_angles() const { return joints * (joints - 1) * (joints - 2) / 2; }
  std::size_t static_dim() const { return 2 * pairs() + inner_angles(); }
  std::size_t dynamic_dim() const { return static_dim() + 3 * joints; }
  std::size_t total_dim() const { return static_dim() + dynamic_dim(); }
  // True for static dimensions holding angles (orientations, inner angles).
  bool static_is_angle(std::size_t d) const { return d >= pairs(); }
};

// Joints become offsets from the head divided by the person size, the median
// head-to-hip-centre distance over the sequence.
PoseSequence normalize_poses(const PoseSequence& seq, const HlpfConfig& config = {});

// Pairwise distances (i<j), pairwise orientations atan2(dy, dx) of i->j, then
// for every vertex j and pair i<k of the other joints the inner angle at j
// between j->i and j->k. Angles are radians; a zero-length arm gives 0.
std::vector<double> static_features(const Pose& pose);

// Rows for t = 0 .. T-1-delta: static(t+delta) - static(t) with angle
// differences wrapped, then per joint dx, dy and orientation(dx, dy).
// Empty (0 rows) when T <= delta.
MatrixD dynamic_features(const PoseSequence& seq, const HlpfConfig& config = {});

struct VideoFeatures {
  MatrixD static_rows;   // T x static_dim
  MatrixD dynamic_rows;  // (T - delta) x dynamic_dim
};

// Normalizes the sequence, then computes both feature sets.
VideoFeatures video_features(const PoseSequence& seq, const HlpfConfig& config = {});

struct Codebook {
  std::vector<std::vector<double>> centers;  // per dimension, ascending

  std::size_t dims() const { return centers.size(); }
  std::size_t size() const { return centers.empty() ? 0 : centers.front().size(); }

  // Text: one line per dimension, "index c_1 ... c_k".
  void save(const std::filesystem::path& path) const;
  static Codebook load(const std::filesystem::path& path);

  bool operator==(const Codebook&) const = default;
};

// One scalar k-means per feature dimension (static dims first, then dynamic).
Codebook fit_codebooks(std::span<const VideoFeatures> training, const HlpfConfig& config = {});

// Per-dimension histograms of nearest-center indices, concatenated and L2
// normalized. Length codebook.dims() * codebook.size().
std::vector<float> encode_features(const VideoFeatures& features, const Codebook& codebook);
std::vector<float> encode_video(const PoseSequence& seq, const Codebook& codebook, const HlpfConfig& config = {});

}  // namespace pcnn::hlpf
