#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "pcnn/flowprep.hpp"
#include "pcnn/matrix.hpp"
#include "pcnn/partcrop.hpp"

namespace pcnn {

struct DescriptorKey {
  std::string video_id;
  std::uint32_t frame = 0;
  Part part = Part::full_image;
  Stream stream = Stream::appearance;

  auto operator<=>(const DescriptorKey&) const = default;
};

std::string to_string(const DescriptorKey& key);

// Per-frame descriptors f_t for one (part, stream): T rows of k values.
struct DescriptorSeries {
  Part part = Part::full_image;
  Stream stream = Stream::appearance;
  MatrixF vectors;

  std::size_t length() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }

  // T >= 1, k >= 1, finite values.
  void validate() const;
};

// Source of frame descriptors. This is where pretrained CNNs plug in.
class DescriptorProvider {
 public:
  virtual ~DescriptorProvider() = default;

  virtual std::size_t dim() const = 0;
  // False for providers that look descriptors up by key alone.
  virtual bool uses_patches() const = 0;
  virtual std::vector<float> describe(const Patch& patch, const DescriptorKey& key) const = 0;
};

// Returns externally computed descriptors verbatim by key. Read-only after load.
class FileStoreProvider : public DescriptorProvider {
 public:
  FileStoreProvider(std::size_t dim, std::map<DescriptorKey, std::vector<float>> entries);
  static FileStoreProvider load(const std::filesystem::path& path);

  std::size_t dim() const override { return dim_; }
  bool uses_patches() const override { return false; }
  std::vector<float> describe(const Patch& patch, const DescriptorKey& key) const override;

  std::size_t size() const { return entries_.size(); }

 private:
  std::size_t dim_;
  std::map<DescriptorKey, std::vector<float>> entries_;
};

// Deterministic stand-in network: a fixed random projection P * z, where z is
// the patch box-averaged to 16x16x3 and scaled to [0, 1]. P is k x 768 with
// entries uniform on [-sqrt(3), sqrt(3)] (unit variance) drawn from the seed.
class TestEmbedder : public DescriptorProvider {
 public:
  static constexpr int kGrid = 16;
  static constexpr std::size_t kInputDim = kGrid * kGrid * 3;

  TestEmbedder(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  bool uses_patches() const override { return true; }
  std::vector<float> describe(const Patch& patch, const DescriptorKey& key) const override;

  // The 768-value input vector for a patch.
  static std::vector<double> downsample(const Patch& patch);

 private:
  std::size_t dim_;
  MatrixD projection_;
};

struct ProviderConfig {
  enum class Kind { file_store, test_embedder };
  Kind kind = Kind::test_embedder;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::filesystem::path store_path;
};

// Builds the provider and checks that its dimension matches config.dim.
std::unique_ptr<DescriptorProvider> make_provider(const ProviderConfig& config);

// Convenience wrapper over DescriptorProvider::describe.
std::vector<float> describe(const Patch& patch, const DescriptorProvider& provider, const DescriptorKey& key);

// Frames and their quantized flow images for one clip. Flow image t holds the
// motion from frame t to frame t+1, so a T-frame clip has T-1 of them.
struct VideoInput {
  int width = 0;
  int height = 0;
  std::vector<Image> frames;
  std::vector<Image> flow_images;
};

struct ExtractConfig {
  BoxConfig boxes;
  int patch_side = 224;
  FlowQuantParams flow_quant;  // used to synthesize the zero-flow image for T = 1
};

// One series per (stream, part): appearance parts first, then flow parts,
// parts in box order. Frame t uses flow image min(t, T-2); a one-frame clip
// uses a quantized zero flow field.
std::vector<DescriptorSeries> extract_series(const VideoInput& video, const PoseSequence& poses,
                                             const DescriptorProvider& provider, const ExtractConfig& config = {});

// "PCNF" container: magic, version u32, dim u32, count u32, then count
// records of {video_id (u32-length-prefixed), frame u32, part u8, stream u8,
// dim float32 LE}.
struct DescriptorRecord {
  DescriptorKey key;
  std::vector<float> values;
};

void write_descriptor_file(const std::filesystem::path& path, std::size_t dim,
                           const std::vector<DescriptorRecord>& records);
std::vector<DescriptorRecord> read_descriptor_file(const std::filesystem::path& path, std::size_t* dim_out = nullptr);

std::vector<DescriptorRecord> series_to_records(const std::string& video_id,
                                                const std::vector<DescriptorSeries>& series);
// Groups one video's records back into series ordered like extract_series.
std::vector<DescriptorSeries> records_to_series(const std::vector<DescriptorRecord>& records,
                                                const std::string& video_id);

}  // namespace pcnn
