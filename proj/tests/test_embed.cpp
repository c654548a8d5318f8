#include <doctest.h>

#include <cmath>

#include "pcnn/embed.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"
#include "support.hpp"

using namespace pcnn;

namespace {

// Mean patch intensity as a one-dimensional descriptor.
class MeanProvider : public DescriptorProvider {
 public:
  std::size_t dim() const override { return 1; }
  bool uses_patches() const override { return true; }
  std::vector<float> describe(const Patch& patch, const DescriptorKey&) const override {
    double s = 0;
    for (float v : patch.data) s += v;
    return {static_cast<float>(s / static_cast<double>(patch.data.size()))};
  }
};

class WrongLengthProvider : public MeanProvider {
 public:
  std::size_t dim() const override { return 2; }
};

Patch constant_patch(int side, float value) {
  return Patch{side, std::vector<float>(static_cast<std::size_t>(side) * side * 3, value)};
}

VideoInput constant_video(std::size_t T, int w, int h) {
  VideoInput v;
  v.width = w;
  v.height = h;
  for (std::size_t t = 0; t < T; ++t) v.frames.emplace_back(w, h, static_cast<std::uint8_t>(50 + t));
  for (std::size_t t = 0; t + 1 < T; ++t) v.flow_images.emplace_back(w, h, static_cast<std::uint8_t>(10 * (t + 1)));
  return v;
}

PoseSequence still_poses(std::size_t T) {
  PoseSequence seq;
  seq.video_id = "clip";
  for (std::size_t t = 0; t < T; ++t) seq.frames.push_back(testing::standing_pose(40, 40, 20));
  return seq;
}

}  // namespace

TEST_CASE("test embedder is linear and deterministic") {
  const TestEmbedder a(32, 5), b(32, 5), c(32, 6);
  Rng rng(1);
  Patch p{20, {}};
  for (int i = 0; i < 20 * 20 * 3; ++i) p.data.push_back(static_cast<float>(rng.uniform(0, 255)));
  const DescriptorKey key{"v", 0, Part::full_image, Stream::appearance};
  CHECK(describe(p, a, key) == describe(p, b, key));
  CHECK(describe(p, a, key) != describe(p, c, key));
  for (float v : describe(constant_patch(20, 0.0f), a, key)) CHECK(v == 0.0f);
}

TEST_CASE("test embedder matches an explicit projection of the downsampled patch") {
  const TestEmbedder e(8, 42);
  // Recover the projection columns by describing one-hot 16x16 patches.
  const DescriptorKey key{"v", 0, Part::full_image, Stream::appearance};
  Rng rng(2);
  Patch p{16, {}};
  for (int i = 0; i < 16 * 16 * 3; ++i) p.data.push_back(static_cast<float>(rng.uniform(0, 255)));
  std::vector<double> expect(8, 0.0);
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < TestEmbedder::kInputDim; ++j) {
    Patch one = constant_patch(16, 0.0f);
    one.data[j] = 255.0f;
    const auto col = e.describe(one, key);
    for (std::size_t i = 0; i < 8; ++i) {
      expect[i] += col[i] * (p.data[j] / 255.0);
      sum_sq += static_cast<double>(col[i]) * col[i];
      ++n;
    }
  }
  const auto got = e.describe(p, key);
  for (std::size_t i = 0; i < 8; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-4));
  // Unit-variance entries: mean square over 6144 draws is close to 1.
  CHECK(sum_sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("downsample averages blocks and scales to [0, 1]") {
  Patch p{32, std::vector<float>(32 * 32 * 3, 0.0f)};
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) p.data[(static_cast<std::size_t>(y) * 32 + x) * 3] = static_cast<float>(x % 2 ? 255 : 0);
  const auto z = TestEmbedder::downsample(p);
  REQUIRE(z.size() == 768);
  for (std::size_t i = 0; i < 256; ++i) {
    CHECK(z[i * 3] == doctest::Approx(0.5));
    CHECK(z[i * 3 + 1] == 0.0);
  }
  // Patches smaller than the grid sample the nearest pixel.
  const auto small = TestEmbedder::downsample(constant_patch(4, 51.0f));
  for (double v : small) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("file store returns stored vectors verbatim") {
  testing::TempDir dir;
  const DescriptorKey k1{"vid", 0, Part::right_hand, Stream::flow};
  const DescriptorKey k2{"vid", 1, Part::right_hand, Stream::flow};
  std::vector<DescriptorRecord> recs{{k1, {1.5f, -2.0f, 0.1f}}, {k2, {3.0f, 4.0f, 5.0f}}};
  write_descriptor_file(dir / "store.pcnf", 3, recs);
  ProviderConfig cfg{ProviderConfig::Kind::file_store, 3, 0, dir / "store.pcnf"};
  const auto store = make_provider(cfg);
  CHECK_FALSE(store->uses_patches());
  CHECK(describe(Patch{}, *store, k1) == recs[0].values);
  CHECK(describe(Patch{}, *store, k2) == recs[1].values);
  CHECK_THROWS_AS(describe(Patch{}, *store, DescriptorKey{"vid", 2, Part::right_hand, Stream::flow}), LookupError);
  cfg.dim = 4;
  CHECK_THROWS_AS(make_provider(cfg), FormatError);
}

TEST_CASE("provider output length is checked") {
  const WrongLengthProvider p;
  CHECK_THROWS_AS(describe(constant_patch(2, 1), p, DescriptorKey{}), FormatError);
}

TEST_CASE("extract_series yields one series per stream and part") {
  const TestEmbedder e(4, 1);
  ExtractConfig cfg;
  cfg.patch_side = 16;
  const auto series = extract_series(constant_video(3, 80, 80), still_poses(3), e, cfg);
  REQUIRE(series.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(series[i].length() == 3);
    CHECK(series[i].dim() == 4);
    CHECK(series[i].stream == (i < 5 ? Stream::appearance : Stream::flow));
    CHECK(series[i].part == kAllParts[i % 5]);
  }
}

TEST_CASE("last frame reuses the last flow image") {
  const MeanProvider mp;
  ExtractConfig cfg;
  cfg.patch_side = 8;
  const auto series = extract_series(constant_video(3, 80, 80), still_poses(3), mp, cfg);
  const auto& flow_full = series[9];
  REQUIRE(flow_full.part == Part::full_image);
  CHECK(flow_full.vectors(0, 0) == doctest::Approx(10));
  CHECK(flow_full.vectors(1, 0) == doctest::Approx(20));
  CHECK(flow_full.vectors(2, 0) == doctest::Approx(20));
  const auto& app_full = series[4];
  CHECK(app_full.vectors(2, 0) == doctest::Approx(52));
}

TEST_CASE("single-frame clip uses a zero flow field") {
  const MeanProvider mp;
  ExtractConfig cfg;
  cfg.patch_side = 8;
  const auto series = extract_series(constant_video(1, 80, 80), still_poses(1), mp, cfg);
  REQUIRE(series.size() == 10);
  CHECK(series[9].vectors(0, 0) == doctest::Approx(128));
}

TEST_CASE("file store extraction needs no pixels") {
  std::map<DescriptorKey, std::vector<float>> entries;
  for (std::uint32_t t = 0; t < 2; ++t)
    for (Part p : kAllParts)
      for (Stream s : {Stream::appearance, Stream::flow})
        entries[{"clip", t, p, s}] = {static_cast<float>(t), static_cast<float>(p), static_cast<float>(s)};
  const FileStoreProvider store(3, entries);
  const auto series = extract_series(VideoInput{}, still_poses(2), store);
  REQUIRE(series.size() == 10);
  for (const auto& s : series)
    for (std::uint32_t t = 0; t < 2; ++t) {
      const auto want = entries.at({"clip", t, s.part, s.stream});
      CHECK(std::vector<float>(s.vectors.row(t).begin(), s.vectors.row(t).end()) == want);
    }
  auto partial = entries;
  partial.erase({"clip", 1, Part::left_hand, Stream::flow});
  const FileStoreProvider missing(3, partial);
  CHECK_THROWS_AS(extract_series(VideoInput{}, still_poses(2), missing), LookupError);
}

TEST_CASE("frame count must match the poses") {
  const TestEmbedder e(4, 1);
  auto v = constant_video(3, 80, 80);
  v.frames.pop_back();
  CHECK_THROWS_AS(extract_series(v, still_poses(3), e), ValidationError);
}

TEST_CASE("series survive the descriptor container") {
  testing::TempDir dir;
  const TestEmbedder e(5, 9);
  ExtractConfig cfg;
  cfg.patch_side = 16;
  const auto series = extract_series(constant_video(4, 64, 64), still_poses(4), e, cfg);
  write_descriptor_file(dir / "s.pcnf", 5, series_to_records("clip", series));
  std::size_t dim = 0;
  const auto back = records_to_series(read_descriptor_file(dir / "s.pcnf", &dim), "clip");
  CHECK(dim == 5);
  REQUIRE(back.size() == series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(back[i].part == series[i].part);
    CHECK(back[i].stream == series[i].stream);
    CHECK(back[i].vectors == series[i].vectors);
  }
  CHECK_THROWS_AS(records_to_series(read_descriptor_file(dir / "s.pcnf"), "other"), LookupError);
  io::write_text(dir / "bad.pcnf", "PCNFjunk");
  CHECK_THROWS_AS(read_descriptor_file(dir / "bad.pcnf"), FormatError);
}
