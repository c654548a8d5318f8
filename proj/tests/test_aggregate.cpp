#include <doctest.h>

#include <cmath>

#include "pcnn/aggregate.hpp"
#include "pcnn/errors.hpp"
#include "support.hpp"

using namespace pcnn;

namespace {

DescriptorSeries series_of(std::vector<std::vector<float>> rows, Part part = Part::full_image,
                           Stream stream = Stream::appearance) {
  DescriptorSeries s;
  s.part = part;
  s.stream = stream;
  for (const auto& r : rows) s.vectors.push_row(r);
  return s;
}

std::vector<float> v(std::initializer_list<float> x) { return x; }

// Every (part, stream) pair with constant rows of the given value.
std::vector<DescriptorSeries> full_set(std::size_t T, std::size_t k, float value) {
  std::vector<DescriptorSeries> out;
  for (Stream s : {Stream::appearance, Stream::flow})
    for (Part p : kAllParts) {
      DescriptorSeries d;
      d.part = p;
      d.stream = s;
      d.vectors = MatrixF(T, k, value);
      out.push_back(d);
    }
  return out;
}

Normalizer ones() {
  Normalizer n;
  for (Stream s : {Stream::appearance, Stream::flow})
    for (Part p : kAllParts) n.set(p, s, 1.0);
  return n;
}

}  // namespace

TEST_CASE("min_max per dimension") {
  const auto mm = min_max(series_of({{1, 5}, {3, 2}, {2, 9}}));
  CHECK(mm.min == v({1, 2}));
  CHECK(mm.max == v({3, 9}));
  const auto one = min_max(series_of({{4, -1}}));
  CHECK(one.min == v({4, -1}));
  CHECK(one.max == v({4, -1}));
  CHECK_THROWS_AS(min_max(DescriptorSeries{}), ValidationError);
}

TEST_CASE("static descriptor is [min, max]") {
  CHECK(static_descriptor(series_of({{1, 5}, {3, 2}, {2, 9}})) == v({1, 2, 3, 9}));
  CHECK(static_descriptor(series_of({{5}, {7}})) == v({5, 7}));
  CHECK(static_descriptor(series_of({{2, 2}, {2, 2}})) == v({2, 2, 2, 2}));
}

TEST_CASE("temporal differences and the short-clip fallback") {
  const auto six = series_of({{0}, {1}, {3}, {6}, {10}, {15}});
  const auto d6 = temporal_diffs(six, 4);
  REQUIRE(d6.rows() == 2);
  CHECK(d6(0, 0) == 10);
  CHECK(d6(1, 0) == 14);

  // T = 3, delta 4 falls back to delta 2: one row f3 - f1.
  const auto three = series_of({{1, 2}, {5, 5}, {4, 10}});
  const auto d3 = temporal_diffs(three, 4);
  REQUIRE(d3.rows() == 1);
  CHECK(d3(0, 0) == 3);
  CHECK(d3(0, 1) == 8);

  const auto d1 = temporal_diffs(series_of({{7, 8}}), 4);
  REQUIRE(d1.rows() == 1);
  CHECK(d1(0, 0) == 0);
  CHECK(d1(0, 1) == 0);
  CHECK_THROWS_AS(temporal_diffs(three, 0), ValidationError);
}

TEST_CASE("fallback enumeration for every short length") {
  for (std::size_t T = 1; T <= 8; ++T) {
    DescriptorSeries s;
    for (std::size_t t = 0; t < T; ++t) s.vectors.push_row(v({static_cast<float>(t * t)}));
    for (int dt = 1; dt <= 6; ++dt) {
      const auto d = temporal_diffs(s, dt);
      const std::size_t eff = T == 1 ? 0 : std::min<std::size_t>(dt, T - 1);
      REQUIRE(d.rows() == (T == 1 ? 1 : T - eff));
      for (std::size_t t = 0; t < d.rows(); ++t) {
        const float want = T == 1 ? 0.0f : static_cast<float>((t + eff) * (t + eff) - t * t);
        CHECK(d(t, 0) == want);
      }
    }
  }
}

TEST_CASE("dynamic descriptor") {
  CHECK(dynamic_descriptor(series_of({{0}, {10}}), 1) == v({10, 10}));
  CHECK(dynamic_descriptor(series_of({{0}, {10}, {0}}), 1) == v({-10, 10}));
  CHECK(dynamic_descriptor(series_of({{3, 3}, {3, 3}, {3, 3}}), 4) == v({0, 0, 0, 0}));
}

TEST_CASE("normalizer is the mean frame norm") {
  const auto two = series_of({{2, 0}, {0, 4}}, Part::left_hand, Stream::flow);
  const Normalizer n = fit_normalizer(std::span(&two, 1));
  CHECK(n.at(Part::left_hand, Stream::flow) == doctest::Approx(3));
  const auto single = series_of({{3, 4}});
  CHECK(fit_normalizer(std::span(&single, 1)).at(Part::full_image, Stream::appearance) == doctest::Approx(5));
  const auto zero = series_of({{0, 0}});
  CHECK_THROWS_AS(fit_normalizer(std::span(&zero, 1)), ValidationError);
  CHECK_THROWS_AS(fit_normalizer(std::span<const DescriptorSeries>{}), ValidationError);
  CHECK_THROWS_AS(n.at(Part::right_hand, Stream::flow), LookupError);
}

TEST_CASE("normalizer pools frames across videos") {
  const auto a = series_of({{1, 0}}, Part::right_hand);
  const auto b = series_of({{0, 2}, {0, 6}}, Part::right_hand);
  const std::vector<DescriptorSeries> both{a, b};
  CHECK(fit_normalizer(both).at(Part::right_hand, Stream::appearance) == doctest::Approx(3));
}

TEST_CASE("full-size descriptor length") {
  AggregationConfig cfg;
  CHECK(descriptor_length(cfg, 4096) == 163840);
  cfg.parts = {kUpperBodyParts.begin(), kUpperBodyParts.end()};
  CHECK(descriptor_length(cfg, 4096) == 131072);
}

TEST_CASE("small assemble cases") {
  AggregationConfig cfg;
  cfg.scheme = Scheme::max;
  cfg.parts = {Part::full_image};
  cfg.streams = StreamSelection::appearance;
  const auto set = full_set(3, 2, 1.5f);
  const auto d = assemble(set, cfg, ones());
  CHECK(d.values.size() == 2);
  REQUIRE(d.layout.size() == 1);
  CHECK(d.layout[0].block == Block::max);

  cfg.scheme = Scheme::max_min;
  const auto mm = assemble(set, cfg, ones());
  CHECK(mm.values == v({1.5f, 1.5f, 1.5f, 1.5f}));
  CHECK(mm.layout.size() == 2);
  CHECK(mm.layout[0].block == Block::min);
  CHECK(mm.layout[1].offset == 2);
}

TEST_CASE("assemble order and normalization") {
  std::vector<DescriptorSeries> set;
  float base = 0;
  for (Stream s : {Stream::appearance, Stream::flow})
    for (Part p : kAllParts) {
      set.push_back(series_of({{base, base + 1}, {base + 2, base - 1}}, p, s));
      base += 10;
    }
  Normalizer n;
  for (Stream s : {Stream::appearance, Stream::flow})
    for (Part p : kAllParts) n.set(p, s, 2.0);
  AggregationConfig cfg;
  cfg.scheme = Scheme::static_dyn_max_min;
  cfg.delta_t = 1;
  cfg.parts = {Part::upper_body, Part::right_hand};
  cfg.streams = StreamSelection::both;
  const auto d = assemble(set, cfg, n);
  REQUIRE(d.values.size() == 2 * 2 * 4 * 2);
  // First block: appearance, upper_body (base 20), min over rows.
  CHECK(d.values[0] == 10.0f);
  CHECK(d.values[1] == 9.5f);
  CHECK(d.layout[0].part == static_cast<std::uint8_t>(Part::upper_body));
  CHECK(d.layout[4].part == static_cast<std::uint8_t>(Part::right_hand));
  CHECK(d.layout[8].stream == static_cast<std::uint8_t>(Stream::flow));
  // Dynamic blocks of the first pair: diff row (2, -2) / 2.
  CHECK(d.values[4] == 1.0f);
  CHECK(d.values[5] == -1.0f);
  CHECK_NOTHROW(d.validate());

  cfg.parts = {Part::full_body};
  std::vector<DescriptorSeries> missing(set.begin(), set.begin() + 5);
  CHECK_THROWS_AS(assemble(missing, cfg, n), LookupError);
  Normalizer partial;
  partial.set(Part::full_body, Stream::appearance, 1.0);
  CHECK_THROWS_AS(assemble(set, cfg, partial), LookupError);
}

TEST_CASE("layout table round trip") {
  AggregationConfig cfg;
  cfg.parts = {Part::left_hand, Part::full_image};
  const auto d = assemble(full_set(5, 3, 2.0f), cfg, ones());
  const auto table = describe_layout(d);
  CHECK(table.rfind("part\tstream\tblock\toffset\tlength\n", 0) == 0);
  CHECK(parse_layout_table(table) == d.layout);
  CHECK(d.layout.size() == 16);
}

TEST_CASE("video descriptor file round trip") {
  testing::TempDir dir;
  AggregationConfig cfg;
  Rng rng(4);
  auto set = full_set(4, 3, 0.0f);
  for (auto& s : set)
    for (auto& x : s.vectors.data()) x = static_cast<float>(rng.uniform(-3, 3));
  const auto d = assemble(set, cfg, fit_normalizer(set));
  write_video_descriptor(dir / "d.pcnv", d);
  CHECK(read_video_descriptor(dir / "d.pcnv") == d);
  const auto h = single_block_descriptor({0.5f, 0.25f}, Block::histogram);
  write_video_descriptor(dir / "h.pcnv", h);
  CHECK(read_video_descriptor(dir / "h.pcnv") == h);
}

TEST_CASE("normalizer file round trip") {
  testing::TempDir dir;
  Normalizer n;
  n.set(Part::right_hand, Stream::flow, 0.1);
  n.set(Part::full_image, Stream::appearance, 123.456789);
  n.save(dir / "n.txt");
  CHECK(Normalizer::load(dir / "n.txt") == n);
}

TEST_CASE("config validation") {
  AggregationConfig cfg;
  cfg.delta_t = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.delta_t = 1;
  cfg.parts.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.parts = {Part::left_hand, Part::left_hand};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(parse_scheme("static_dyn_max") == Scheme::static_dyn_max);
  CHECK_THROWS_AS(parse_scheme("sum"), ValidationError);
}

TEST_CASE("property: dimension formula over random configs") {
  Rng rng(8);
  const Scheme schemes[] = {Scheme::max, Scheme::max_min, Scheme::static_dyn_max, Scheme::static_dyn_max_min,
                            Scheme::mean};
  const std::size_t blocks[] = {1, 2, 2, 4, 1};
  for (int trial = 0; trial < 200; ++trial) {
    AggregationConfig cfg;
    const std::size_t si = rng.below(5);
    cfg.scheme = schemes[si];
    cfg.delta_t = 1 + static_cast<int>(rng.below(5));
    std::vector<Part> parts(kAllParts.begin(), kAllParts.end());
    rng.shuffle(parts);
    parts.resize(1 + rng.below(5));
    cfg.parts = parts;
    const std::size_t st = rng.below(3);
    cfg.streams = st == 0 ? StreamSelection::appearance : st == 1 ? StreamSelection::flow : StreamSelection::both;
    const std::size_t k = 1 + rng.below(6), T = 1 + rng.below(7);
    const auto d = assemble(full_set(T, k, 1.0f), cfg, ones());
    const std::size_t streams = st == 2 ? 2 : 1;
    CHECK(d.values.size() == streams * parts.size() * blocks[si] * k);
    CHECK(d.values.size() == descriptor_length(cfg, k));
    CHECK_NOTHROW(d.validate());
  }
}

TEST_CASE("property: scale cancellation with a refit normalizer") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto set = full_set(1 + rng.below(6), 1 + rng.below(4), 0.0f);
    for (auto& s : set)
      for (auto& x : s.vectors.data()) x = static_cast<float>(rng.below(17)) - 8.0f;
    for (auto& s : set) s.vectors(0, 0) = 1.0f;  // non-zero norms
    auto scaled = set;
    const float c = static_cast<float>(1 << rng.below(5));  // powers of two keep float math exact
    for (auto& s : scaled)
      for (auto& x : s.vectors.data()) x *= c;
    AggregationConfig cfg;
    const auto a = assemble(set, cfg, fit_normalizer(set));
    const auto b = assemble(scaled, cfg, fit_normalizer(scaled));
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(b.values[i] == doctest::Approx(a.values[i]).epsilon(1e-6));
  }
}

TEST_CASE("property: dynamic blocks depend on frame order") {
  const auto fwd = series_of({{0}, {1}, {5}});
  const auto rev = series_of({{5}, {1}, {0}});
  CHECK(static_descriptor(fwd) == static_descriptor(rev));
  CHECK(dynamic_descriptor(fwd, 1) != dynamic_descriptor(rev, 1));
}

TEST_CASE("property: dynamic extremes are bounded by the frame range") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 1 + rng.below(10), k = 1 + rng.below(4);
    DescriptorSeries s;
    s.vectors = MatrixF(T, k);
    for (auto& x : s.vectors.data()) x = static_cast<float>(rng.uniform(-4, 4));
    const auto mm = min_max(s);
    const auto dyn = dynamic_descriptor(s, 1 + static_cast<int>(rng.below(5)));
    for (std::size_t i = 0; i < k; ++i) {
      const float range = mm.max[i] - mm.min[i];
      CHECK(dyn[i] <= dyn[k + i]);
      CHECK(dyn[i] >= -range);
      CHECK(dyn[k + i] <= range);
    }
  }
}
