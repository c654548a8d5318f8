#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcnn/embed.hpp"

namespace pcnn {

// Temporal aggregation schemes. Blocks emitted per (part, stream):
//   max                 [M]
//   max_min             [m, M]
//   static_dyn_max      [M, dM]
//   static_dyn_max_min  [m, M, dm, dM]
//   mean                [mean]
enum class Scheme { max, max_min, static_dyn_max, static_dyn_max_min, mean };

enum class Block : std::uint8_t { min = 0, max = 1, dyn_min = 2, dyn_max = 3, mean = 4, histogram = 5, fisher = 6 };

enum class StreamSelection { appearance, flow, both };

std::string_view to_string(Scheme s);
std::string_view to_string(Block b);
std::string_view to_string(StreamSelection s);
Scheme parse_scheme(std::string_view s);
Block parse_block(std::string_view s);
StreamSelection parse_stream_selection(std::string_view s);

std::vector<Block> scheme_blocks(Scheme s);
std::vector<Stream> selected_streams(StreamSelection s);

struct AggregationConfig {
  Scheme scheme = Scheme::static_dyn_max_min;
  int delta_t = 4;
  std::vector<Part> parts{kAllParts.begin(), kAllParts.end()};
  StreamSelection streams = StreamSelection::both;

  void validate() const;
};

// Part/stream code used by layout entries that are not tied to a body part
// (HLPF histograms, Fisher vectors).
inline constexpr std::uint8_t kNoPart = 255;

struct LayoutEntry {
  std::uint8_t part = kNoPart;
  std::uint8_t stream = kNoPart;
  Block block = Block::max;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;

  bool operator==(const LayoutEntry&) const = default;
};

struct VideoDescriptor {
  std::vector<float> values;
  std::vector<LayoutEntry> layout;

  // Blocks are contiguous from offset 0 and cover every value exactly once.
  void validate() const;
  bool operator==(const VideoDescriptor&) const = default;
};

// A one-block descriptor, the container used for HLPF and FV encodings.
VideoDescriptor single_block_descriptor(std::vector<float> values, Block block);

struct MinMax {
  std::vector<float> min;
  std::vector<float> max;
};

MinMax min_max(const MatrixF& rows);
MinMax min_max(const DescriptorSeries& series);

// [m_1..m_k, M_1..M_k]
std::vector<float> static_descriptor(const DescriptorSeries& series);

// Rows f_{t+d} - f_t with d = min(delta_t, T-1); a single zero row when T = 1.
MatrixF temporal_diffs(const DescriptorSeries& series, int delta_t);

// [dm_1..dm_k, dM_1..dM_k] over temporal_diffs.
std::vector<float> dynamic_descriptor(const DescriptorSeries& series, int delta_t);

std::vector<float> mean_descriptor(const DescriptorSeries& series);

// One positive scale per (part, stream): the mean L2 norm of training frame
// descriptors. Every block of that (part, stream) is divided by it.
class Normalizer {
 public:
  void set(Part part, Stream stream, double value);
  double at(Part part, Stream stream) const;
  bool contains(Part part, Stream stream) const { return scales_.count({part, stream}) != 0; }
  const std::map<std::pair<Part, Stream>, double>& entries() const { return scales_; }

  // Text: one "part stream value" line per entry.
  void save(const std::filesystem::path& path) const;
  static Normalizer load(const std::filesystem::path& path);

  bool operator==(const Normalizer&) const = default;

 private:
  std::map<std::pair<Part, Stream>, double> scales_;
};

Normalizer fit_normalizer(std::span<const DescriptorSeries> training_series);

std::size_t descriptor_length(const AggregationConfig& config, std::size_t dim);

// Concatenates stream-major (appearance, flow), then parts in config order,
// then the scheme's blocks, each divided by its (part, stream) normalizer.
VideoDescriptor assemble(std::span<const DescriptorSeries> series, const AggregationConfig& config,
                         const Normalizer& normalizer);

// Tab-separated table "part stream block offset length", one row per block.
std::string describe_layout(const VideoDescriptor& descriptor);
std::vector<LayoutEntry> parse_layout_table(std::string_view table);

// "PCNV" container: magic, version u32, dim u32, layout count u32, entries of
// (part u8, stream u8, block u8, offset u32, length u32), then dim float32 LE.
void write_video_descriptor(const std::filesystem::path& path, const VideoDescriptor& descriptor);
VideoDescriptor read_video_descriptor(const std::filesystem::path& path);

}  // namespace pcnn
