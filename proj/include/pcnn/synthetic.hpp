#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcnn/embed.hpp"
#include "pcnn/flowprep.hpp"
#include "pcnn/fvenc.hpp"
#include "pcnn/manifest.hpp"
#include "pcnn/pose.hpp"

// Two-class synthetic clips ("wave": one hand oscillates over a still body;
// "walk": the whole body translates) rendered with exact ground-truth flow.
// Only IEEE basic arithmetic is used so the data is identical on every
// platform for a given seed.
namespace pcnn::synth {

inline constexpr const char* kWave = "wave";
inline constexpr const char* kWalk = "walk";

struct SyntheticConfig {
  int train_per_class = 20;
  int test_per_class = 10;
  int width = 96;
  int height = 72;
  int min_frames = 16;
  int max_frames = 24;
  std::uint64_t seed = 7;
};

struct SyntheticVideo {
  std::string video_id;
  std::string label;
  bool train = true;
  PoseSequence poses;
  std::vector<Image> frames;
  std::vector<FlowField> flows;  // frames.size() - 1 fields
};

// sin via range reduction and a fixed polynomial; platform-stable.
double portable_sin(double x);

std::vector<SyntheticVideo> make_dataset(const SyntheticConfig& config = {});

// Frames plus quantized flow images, ready for extract_series.
VideoInput to_video_input(const SyntheticVideo& video, const FlowQuantParams& quant = {});

// Dense flow descriptors standing in for trajectory features: on a grid with
// the given stride, a 5x5 window's mean (vx, vy, |v|) and an 8-bin
// magnitude-weighted orientation histogram. Windows with mean magnitude
// below min_magnitude are skipped.
fv::LocalDescriptorSet local_flow_descriptors(const std::vector<FlowField>& flows, int stride = 4,
                                              double min_magnitude = 0.2);

// Writes frames, flows, poses and local descriptors under dir and returns the
// manifest (also saved as dir/manifest.tsv), all entries in split 1.
DatasetManifest write_dataset(const std::vector<SyntheticVideo>& videos, const std::filesystem::path& dir);

}  // namespace pcnn::synth
