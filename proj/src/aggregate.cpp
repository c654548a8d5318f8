#include "pcnn/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn {

namespace {
constexpr std::uint32_t kVideoDescriptorVersion = 1;

void require_nonempty(const DescriptorSeries& s) {
  if (s.length() == 0 || s.dim() == 0) throw ValidationError("descriptor series is empty");
}
}  // namespace

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::max: return "max";
    case Scheme::max_min: return "max_min";
    case Scheme::static_dyn_max: return "static_dyn_max";
    case Scheme::static_dyn_max_min: return "static_dyn_max_min";
    case Scheme::mean: return "mean";
  }
  return "?";
}

std::string_view to_string(Block b) {
  switch (b) {
    case Block::min: return "min";
    case Block::max: return "max";
    case Block::dyn_min: return "dyn_min";
    case Block::dyn_max: return "dyn_max";
    case Block::mean: return "mean";
    case Block::histogram: return "histogram";
    case Block::fisher: return "fisher";
  }
  return "?";
}

std::string_view to_string(StreamSelection s) {
  switch (s) {
    case StreamSelection::appearance: return "appearance";
    case StreamSelection::flow: return "flow";
    case StreamSelection::both: return "both";
  }
  return "?";
}

Scheme parse_scheme(std::string_view s) {
  for (Scheme v : {Scheme::max, Scheme::max_min, Scheme::static_dyn_max, Scheme::static_dyn_max_min, Scheme::mean})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown aggregation scheme '" + std::string(s) + "'");
}

Block parse_block(std::string_view s) {
  for (int i = 0; i <= 6; ++i)
    if (to_string(static_cast<Block>(i)) == s) return static_cast<Block>(i);
  throw FormatError("unknown block name '" + std::string(s) + "'");
}

StreamSelection parse_stream_selection(std::string_view s) {
  for (auto v : {StreamSelection::appearance, StreamSelection::flow, StreamSelection::both})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown stream selection '" + std::string(s) + "'");
}

std::vector<Block> scheme_blocks(Scheme s) {
  switch (s) {
    case Scheme::max: return {Block::max};
    case Scheme::max_min: return {Block::min, Block::max};
    case Scheme::static_dyn_max: return {Block::max, Block::dyn_max};
    case Scheme::static_dyn_max_min: return {Block::min, Block::max, Block::dyn_min, Block::dyn_max};
    case Scheme::mean: return {Block::mean};
  }
  return {};
}

std::vector<Stream> selected_streams(StreamSelection s) {
  switch (s) {
    case StreamSelection::appearance: return {Stream::appearance};
    case StreamSelection::flow: return {Stream::flow};
    case StreamSelection::both: return {Stream::appearance, Stream::flow};
  }
  return {};
}

void AggregationConfig::validate() const {
  if (delta_t < 1) throw ValidationError("delta_t must be at least 1");
  if (parts.empty()) throw ValidationError("aggregation needs at least one part");
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (std::size_t j = i + 1; j < parts.size(); ++j)
      if (parts[i] == parts[j]) throw ValidationError("duplicate part in aggregation config");
}

void VideoDescriptor::validate() const {
  std::size_t expect = 0;
  for (const auto& e : layout) {
    if (e.offset != expect) throw FormatError("descriptor layout is not contiguous");
    expect += e.length;
  }
  if (expect != values.size()) throw FormatError("descriptor layout does not cover its values");
}

VideoDescriptor single_block_descriptor(std::vector<float> values, Block block) {
  VideoDescriptor d;
  d.layout.push_back(LayoutEntry{kNoPart, kNoPart, block, 0, static_cast<std::uint32_t>(values.size())});
  d.values = std::move(values);
  return d;
}

MinMax min_max(const MatrixF& rows) {
  if (rows.rows() == 0 || rows.cols() == 0) throw ValidationError("cannot aggregate an empty series");
  const auto first = rows.row(0);
  MinMax mm{{first.begin(), first.end()}, {first.begin(), first.end()}};
  for (std::size_t t = 1; t < rows.rows(); ++t) {
    const auto r = rows.row(t);
    for (std::size_t i = 0; i < r.size(); ++i) {
      mm.min[i] = std::min(mm.min[i], r[i]);
      mm.max[i] = std::max(mm.max[i], r[i]);
    }
  }
  return mm;
}

MinMax min_max(const DescriptorSeries& series) { return min_max(series.vectors); }

std::vector<float> static_descriptor(const DescriptorSeries& series) {
  auto mm = min_max(series);
  mm.min.insert(mm.min.end(), mm.max.begin(), mm.max.end());
  return std::move(mm.min);
}

MatrixF temporal_diffs(const DescriptorSeries& series, int delta_t) {
  require_nonempty(series);
  if (delta_t < 1) throw ValidationError("delta_t must be at least 1");
  const std::size_t T = series.length();
  const std::size_t k = series.dim();
  if (T == 1) return MatrixF(1, k, 0.0f);
  const std::size_t d = std::min<std::size_t>(static_cast<std::size_t>(delta_t), T - 1);
  MatrixF diffs(T - d, k);
  for (std::size_t t = 0; t + d < T; ++t) {
    const auto a = series.vectors.row(t);
    const auto b = series.vectors.row(t + d);
    auto out = diffs.row(t);
    for (std::size_t i = 0; i < k; ++i) out[i] = b[i] - a[i];
  }
  return diffs;
}

std::vector<float> dynamic_descriptor(const DescriptorSeries& series, int delta_t) {
  auto mm = min_max(temporal_diffs(series, delta_t));
  mm.min.insert(mm.min.end(), mm.max.begin(), mm.max.end());
  return std::move(mm.min);
}

std::vector<float> mean_descriptor(const DescriptorSeries& series) {
  require_nonempty(series);
  std::vector<double> acc(series.dim(), 0.0);
  for (std::size_t t = 0; t < series.length(); ++t) {
    const auto r = series.vectors.row(t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i];
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / series.length());
  return out;
}

void Normalizer::set(Part part, Stream stream, double value) {
  if (!(value > 0.0) || !std::isfinite(value)) throw ValidationError("normalizer entries must be positive");
  scales_[{part, stream}] = value;
}

double Normalizer::at(Part part, Stream stream) const {
  auto it = scales_.find({part, stream});
  if (it == scales_.end())
    throw LookupError("normalizer has no entry for " + std::string(to_string(part)) + "/" +
                      std::string(to_string(stream)));
  return it->second;
}

void Normalizer::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [key, v] : scales_)
    out += std::string(to_string(key.first)) + " " + std::string(to_string(key.second)) + " " +
           io::format_double(v) + "\n";
  io::write_text(path, out);
}

Normalizer Normalizer::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  Normalizer n;
  std::string part, stream;
  double v = 0;
  while (in >> part >> stream >> v) n.set(parse_part(part), parse_stream(stream), v);
  if (!in.eof()) throw FormatError(path.string() + ": malformed normalizer line");
  if (n.scales_.empty()) throw FormatError(path.string() + ": empty normalizer");
  return n;
}

Normalizer fit_normalizer(std::span<const DescriptorSeries> training_series) {
  if (training_series.empty()) throw ValidationError("cannot fit a normalizer on an empty training set");
  std::map<std::pair<Part, Stream>, std::pair<double, std::size_t>> acc;
  for (const auto& s : training_series) {
    auto& [sum, count] = acc[{s.part, s.stream}];
    for (std::size_t t = 0; t < s.length(); ++t) {
      double sq = 0.0;
      for (float v : s.vectors.row(t)) sq += static_cast<double>(v) * v;
      sum += std::sqrt(sq);
      ++count;
    }
  }
  Normalizer n;
  for (const auto& [key, sc] : acc) {
    if (sc.second == 0) throw ValidationError("training series has no frames");
    const double mean = sc.first / static_cast<double>(sc.second);
    if (!(mean > 0.0))
      throw ValidationError("training descriptors for " + std::string(to_string(key.first)) + "/" +
                            std::string(to_string(key.second)) + " are all zero");
    n.set(key.first, key.second, mean);
  }
  return n;
}

std::size_t descriptor_length(const AggregationConfig& config, std::size_t dim) {
  config.validate();
  return selected_streams(config.streams).size() * config.parts.size() * scheme_blocks(config.scheme).size() * dim;
}

VideoDescriptor assemble(std::span<const DescriptorSeries> series, const AggregationConfig& config,
                         const Normalizer& normalizer) {
  config.validate();
  const auto blocks = scheme_blocks(config.scheme);
  const bool need_dyn = std::any_of(blocks.begin(), blocks.end(),
                                    [](Block b) { return b == Block::dyn_min || b == Block::dyn_max; });

  // Validate everything before building output.
  std::vector<const DescriptorSeries*> chosen;
  std::vector<double> scales;
  for (Stream stream : selected_streams(config.streams)) {
    for (Part part : config.parts) {
      auto it = std::find_if(series.begin(), series.end(),
                             [&](const DescriptorSeries& s) { return s.part == part && s.stream == stream; });
      if (it == series.end())
        throw LookupError("missing descriptor series for " + std::string(to_string(part)) + "/" +
                          std::string(to_string(stream)));
      require_nonempty(*it);
      if (!chosen.empty() && it->dim() != chosen.front()->dim())
        throw DimensionError("descriptor series have different dimensions");
      chosen.push_back(&*it);
      scales.push_back(normalizer.at(part, stream));
    }
  }

  VideoDescriptor out;
  out.values.reserve(descriptor_length(config, chosen.front()->dim()));
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    const DescriptorSeries& s = *chosen[c];
    const MinMax stat = min_max(s);
    MinMax dyn;
    if (need_dyn) dyn = min_max(temporal_diffs(s, config.delta_t));
    std::vector<float> mean;
    if (config.scheme == Scheme::mean) mean = mean_descriptor(s);
    for (Block b : blocks) {
      const std::vector<float>* src = nullptr;
      switch (b) {
        case Block::min: src = &stat.min; break;
        case Block::max: src = &stat.max; break;
        case Block::dyn_min: src = &dyn.min; break;
        case Block::dyn_max: src = &dyn.max; break;
        case Block::mean: src = &mean; break;
        default: throw ValidationError("block not produced by temporal aggregation");
      }
      out.layout.push_back(LayoutEntry{static_cast<std::uint8_t>(s.part), static_cast<std::uint8_t>(s.stream), b,
                                       static_cast<std::uint32_t>(out.values.size()),
                                       static_cast<std::uint32_t>(src->size())});
      for (float v : *src) out.values.push_back(static_cast<float>(static_cast<double>(v) / scales[c]));
    }
  }
  return out;
}

namespace {

std::string code_name(std::uint8_t code, bool is_part) {
  if (code == kNoPart) return "-";
  return std::string(is_part ? to_string(part_from_code(code)) : to_string(stream_from_code(code)));
}

std::uint8_t parse_code(const std::string& s, bool is_part) {
  if (s == "-") return kNoPart;
  return is_part ? static_cast<std::uint8_t>(parse_part(s)) : static_cast<std::uint8_t>(parse_stream(s));
}

}  // namespace

std::string describe_layout(const VideoDescriptor& descriptor) {
  std::string out = "part\tstream\tblock\toffset\tlength\n";
  for (const auto& e : descriptor.layout) {
    out += code_name(e.part, true) + "\t" + code_name(e.stream, false) + "\t" + std::string(to_string(e.block)) +
           "\t" + std::to_string(e.offset) + "\t" + std::to_string(e.length) + "\n";
  }
  return out;
}

std::vector<LayoutEntry> parse_layout_table(std::string_view table) {
  std::istringstream in{std::string(table)};
  std::string line;
  std::vector<LayoutEntry> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string part, stream, block;
    std::uint32_t offset = 0, length = 0;
    if (!(ls >> part >> stream >> block >> offset >> length)) throw FormatError("malformed layout row: " + line);
    out.push_back(LayoutEntry{parse_code(part, true), parse_code(stream, false), parse_block(block), offset, length});
  }
  return out;
}

void write_video_descriptor(const std::filesystem::path& path, const VideoDescriptor& descriptor) {
  descriptor.validate();
  io::BinaryWriter w;
  w.magic("PCNV");
  w.u32(kVideoDescriptorVersion);
  w.u32(static_cast<std::uint32_t>(descriptor.values.size()));
  w.u32(static_cast<std::uint32_t>(descriptor.layout.size()));
  for (const auto& e : descriptor.layout) {
    w.u8(e.part);
    w.u8(e.stream);
    w.u8(static_cast<std::uint8_t>(e.block));
    w.u32(e.offset);
    w.u32(e.length);
  }
  w.f32s(std::span<const float>(descriptor.values));
  io::write_file(path, w.bytes());
}

VideoDescriptor read_video_descriptor(const std::filesystem::path& path) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PCNV");
  if (r.u32() != kVideoDescriptorVersion) throw FormatError(path.string() + ": unsupported PCNV version");
  const std::size_t dim = r.u32();
  const std::size_t n_layout = r.u32();
  VideoDescriptor d;
  for (std::size_t i = 0; i < n_layout; ++i) {
    LayoutEntry e;
    e.part = r.u8();
    e.stream = r.u8();
    const auto block = r.u8();
    if (block > 6) throw FormatError(path.string() + ": invalid block code");
    e.block = static_cast<Block>(block);
    e.offset = r.u32();
    e.length = r.u32();
    d.layout.push_back(e);
  }
  d.values = r.f32s(dim);
  r.expect_end();
  d.validate();
  return d;
}

}  // namespace pcnn
