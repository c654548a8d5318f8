#include "pcnn/embed.hpp"

#include <cmath>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"
#include "pcnn/rng.hpp"

namespace pcnn {

namespace {
constexpr std::uint32_t kDescriptorVersion = 1;
}

std::string to_string(const DescriptorKey& key) {
  return key.video_id + "/" + std::to_string(key.frame) + "/" + std::string(to_string(key.part)) + "/" +
         std::string(to_string(key.stream));
}

void DescriptorSeries::validate() const {
  if (vectors.rows() == 0) throw ValidationError("descriptor series is empty");
  if (vectors.cols() == 0) throw DimensionError("descriptor dimension must be positive");
  for (float v : vectors.data())
    if (!std::isfinite(v)) throw ValidationError("descriptor series has non-finite values");
}

FileStoreProvider::FileStoreProvider(std::size_t dim, std::map<DescriptorKey, std::vector<float>> entries)
    : dim_(dim), entries_(std::move(entries)) {
  if (dim_ == 0) throw DimensionError("descriptor dimension must be positive");
  for (const auto& [key, v] : entries_)
    if (v.size() != dim_) throw FormatError("stored descriptor " + to_string(key) + " has the wrong length");
}

FileStoreProvider FileStoreProvider::load(const std::filesystem::path& path) {
  std::size_t dim = 0;
  auto records = read_descriptor_file(path, &dim);
  std::map<DescriptorKey, std::vector<float>> entries;
  for (auto& r : records) {
    if (!entries.emplace(r.key, std::move(r.values)).second)
      throw FormatError(path.string() + ": duplicate key " + to_string(r.key));
  }
  return FileStoreProvider(dim, std::move(entries));
}

std::vector<float> FileStoreProvider::describe(const Patch&, const DescriptorKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw LookupError("no stored descriptor for " + to_string(key));
  return it->second;
}

TestEmbedder::TestEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), projection_(dim, kInputDim) {
  if (dim == 0) throw DimensionError("descriptor dimension must be positive");
  Rng rng(seed);
  const double bound = std::sqrt(3.0);
  for (double& v : projection_.data()) v = rng.uniform(-bound, bound);
}

std::vector<double> TestEmbedder::downsample(const Patch& patch) {
  if (patch.side <= 0 || patch.data.size() != static_cast<std::size_t>(patch.side) * patch.side * 3)
    throw DimensionError("malformed patch");
  const int s = patch.side;
  auto range = [s](int cell) {
    int lo = cell * s / kGrid;
    int hi = (cell + 1) * s / kGrid;
    if (hi <= lo) {
      lo = std::min((2 * cell + 1) * s / (2 * kGrid), s - 1);
      hi = lo + 1;
    }
    return std::pair{lo, hi};
  };
  std::vector<double> z(kInputDim, 0.0);
  for (int gy = 0; gy < kGrid; ++gy) {
    const auto [y0, y1] = range(gy);
    for (int gx = 0; gx < kGrid; ++gx) {
      const auto [x0, x1] = range(gx);
      const double inv = 1.0 / (255.0 * (y1 - y0) * (x1 - x0));
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) sum += patch.at(x, y, c);
        z[(static_cast<std::size_t>(gy) * kGrid + gx) * 3 + c] = sum * inv;
      }
    }
  }
  return z;
}

std::vector<float> TestEmbedder::describe(const Patch& patch, const DescriptorKey&) const {
  const auto z = downsample(patch);
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    const auto row = projection_.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < kInputDim; ++j) acc += row[j] * z[j];
    out[i] = static_cast<float>(acc);
  }
  return out;
}

std::unique_ptr<DescriptorProvider> make_provider(const ProviderConfig& config) {
  if (config.dim == 0) throw DimensionError("descriptor dimension must be positive");
  if (config.kind == ProviderConfig::Kind::test_embedder)
    return std::make_unique<TestEmbedder>(config.dim, config.seed);
  auto store = std::make_unique<FileStoreProvider>(FileStoreProvider::load(config.store_path));
  if (store->dim() != config.dim)
    throw FormatError("descriptor store has dimension " + std::to_string(store->dim()) + ", expected " +
                      std::to_string(config.dim));
  return store;
}

std::vector<float> describe(const Patch& patch, const DescriptorProvider& provider, const DescriptorKey& key) {
  auto v = provider.describe(patch, key);
  if (v.size() != provider.dim()) throw FormatError("descriptor for " + to_string(key) + " has the wrong length");
  return v;
}

std::vector<DescriptorSeries> extract_series(const VideoInput& video, const PoseSequence& poses,
                                             const DescriptorProvider& provider, const ExtractConfig& config) {
  poses.validate();
  const std::size_t T = poses.length();
  const bool need_pixels = provider.uses_patches();
  if (need_pixels) {
    if (video.frames.size() != T)
      throw ValidationError("clip '" + poses.video_id + "' has " + std::to_string(video.frames.size()) +
                            " frames but " + std::to_string(T) + " poses");
    const std::size_t want_flow = T - 1;
    if (video.flow_images.size() != want_flow)
      throw ValidationError("clip '" + poses.video_id + "' needs " + std::to_string(want_flow) + " flow images");
  }

  const int w = need_pixels ? video.frames.front().width : std::max(video.width, 1);
  const int h = need_pixels ? video.frames.front().height : std::max(video.height, 1);
  Image zero_flow;
  if (need_pixels && T == 1) zero_flow = quantize_flow(FlowField(w, h), config.flow_quant);

  const std::size_t n_parts = config.boxes.include_full_body ? 5 : 4;
  std::vector<DescriptorSeries> out(2 * n_parts);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<PartBox> boxes;
    if (need_pixels) {
      boxes = part_boxes(poses.frames[t], w, h, config.boxes);
    } else {
      const auto parts = parts_for_count(static_cast<int>(n_parts));
      for (Part p : parts) boxes.push_back(PartBox{p, 0, 0, 1, 1});
    }
    const Image* flow_img = nullptr;
    if (need_pixels) flow_img = T == 1 ? &zero_flow : &video.flow_images[std::min(t, T - 2)];
    for (std::size_t s = 0; s < 2; ++s) {
      const Stream stream = s == 0 ? Stream::appearance : Stream::flow;
      for (std::size_t p = 0; p < n_parts; ++p) {
        const DescriptorKey key{poses.video_id, static_cast<std::uint32_t>(t), boxes[p].part, stream};
        Patch patch;
        if (need_pixels) patch = crop_resize(s == 0 ? video.frames[t] : *flow_img, boxes[p], config.patch_side);
        std::vector<float> v;
        try {
          v = describe(patch, provider, key);
        } catch (const LookupError& e) {
          throw LookupError(std::string(e.what()) + " (frame " + std::to_string(t) + ", part " +
                            std::string(to_string(boxes[p].part)) + ")");
        }
        auto& series = out[s * n_parts + p];
        series.part = boxes[p].part;
        series.stream = stream;
        series.vectors.push_row(v);
      }
    }
  }
  return out;
}

void write_descriptor_file(const std::filesystem::path& path, std::size_t dim,
                           const std::vector<DescriptorRecord>& records) {
  if (dim == 0) throw DimensionError("descriptor dimension must be positive");
  io::BinaryWriter w;
  w.magic("PCNF");
  w.u32(kDescriptorVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.values.size() != dim) throw DimensionError("descriptor record " + to_string(r.key) + " has wrong length");
    w.string(r.key.video_id);
    w.u32(r.key.frame);
    w.u8(static_cast<std::uint8_t>(r.key.part));
    w.u8(static_cast<std::uint8_t>(r.key.stream));
    w.f32s(std::span<const float>(r.values));
  }
  io::write_file(path, w.bytes());
}

std::vector<DescriptorRecord> read_descriptor_file(const std::filesystem::path& path, std::size_t* dim_out) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PCNF");
  if (r.u32() != kDescriptorVersion) throw FormatError(path.string() + ": unsupported PCNF version");
  const std::size_t dim = r.u32();
  const std::size_t count = r.u32();
  if (dim == 0) throw FormatError(path.string() + ": zero descriptor dimension");
  std::vector<DescriptorRecord> records;
  records.reserve(std::min<std::size_t>(count, 1 << 20));
  for (std::size_t i = 0; i < count; ++i) {
    DescriptorRecord rec;
    rec.key.video_id = r.string();
    rec.key.frame = r.u32();
    rec.key.part = part_from_code(r.u8());
    rec.key.stream = stream_from_code(r.u8());
    rec.values = r.f32s(dim);
    records.push_back(std::move(rec));
  }
  r.expect_end();
  if (dim_out) *dim_out = dim;
  return records;
}

std::vector<DescriptorRecord> series_to_records(const std::string& video_id,
                                                const std::vector<DescriptorSeries>& series) {
  std::vector<DescriptorRecord> out;
  for (const auto& s : series) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      const auto row = s.vectors.row(t);
      out.push_back({DescriptorKey{video_id, static_cast<std::uint32_t>(t), s.part, s.stream},
                     std::vector<float>(row.begin(), row.end())});
    }
  }
  return out;
}

std::vector<DescriptorSeries> records_to_series(const std::vector<DescriptorRecord>& records,
                                                const std::string& video_id) {
  std::map<std::pair<Stream, Part>, std::map<std::uint32_t, const std::vector<float>*>> grouped;
  for (const auto& r : records) {
    if (r.key.video_id != video_id) continue;
    if (!grouped[{r.key.stream, r.key.part}].emplace(r.key.frame, &r.values).second)
      throw FormatError("duplicate descriptor " + to_string(r.key));
  }
  if (grouped.empty()) throw LookupError("no descriptors for video '" + video_id + "'");
  std::vector<DescriptorSeries> out;
  std::size_t T = 0;
  for (const auto& [sp, frames] : grouped) {
    DescriptorSeries s;
    s.stream = sp.first;
    s.part = sp.second;
    std::uint32_t expect = 0;
    for (const auto& [frame, values] : frames) {
      if (frame != expect++) throw FormatError("video '" + video_id + "' has a gap in its frame indices");
      s.vectors.push_row(std::span<const float>(*values));
    }
    if (T == 0) T = s.length();
    if (s.length() != T) throw FormatError("video '" + video_id + "' has series of unequal length");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pcnn
