#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "pcnn/aggregate.hpp"
#include "pcnn/config.hpp"
#include "pcnn/embed.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/eval.hpp"
#include "pcnn/flowprep.hpp"
#include "pcnn/fvenc.hpp"
#include "pcnn/hlpf.hpp"
#include "pcnn/image.hpp"
#include "pcnn/io.hpp"
#include "pcnn/learn.hpp"
#include "pcnn/manifest.hpp"
#include "pcnn/parallel.hpp"
#include "pcnn/partcrop.hpp"
#include "pcnn/pose.hpp"
#include "pcnn/poselink.hpp"
#include "pcnn/rng.hpp"
#include "pcnn/synthetic.hpp"

namespace pcnn::cli {

int selfcheck(std::size_t cases, std::uint64_t seed, std::ostream& out);

namespace {

namespace fs = std::filesystem;

struct Ctx {
  Config cfg;
  std::ostream* out = nullptr;
  unsigned jobs = 1;
  std::uint64_t seed = 0;

  std::string require(const std::string& key) const {
    auto v = cfg.get(key);
    if (!v || v->empty()) throw ValidationError("missing required setting '" + key + "'");
    return *v;
  }
  fs::path out_path() const { return require("out"); }
};

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> items;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) items.push_back(cur.substr(b, e - b + 1));
  }
  return items;
}

std::uint64_t parse_seed(const std::string& s, const std::string& what) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw ValidationError(what + " is not a non-negative integer: " + s);
  return v;
}

// ---- shared loaders ----

DatasetManifest load_manifest(const Ctx& ctx) { return DatasetManifest::load(ctx.require("manifest")); }

int split_of(const Ctx& ctx) { return static_cast<int>(ctx.cfg.get_int("split", 1)); }

std::vector<const ManifestEntry*> entries_for(const DatasetManifest& m, int split, const std::string& set) {
  std::vector<const ManifestEntry*> out;
  if (set == "train" || set == "all") {
    auto v = m.select(split, true);
    out.insert(out.end(), v.begin(), v.end());
  }
  if (set == "test" || set == "all") {
    auto v = m.select(split, false);
    out.insert(out.end(), v.begin(), v.end());
  }
  if (set != "train" && set != "test" && set != "all") throw ValidationError("set must be train, test or all: " + set);
  // Entries point into one vector, so address order is manifest order.
  if (set == "all") std::sort(out.begin(), out.end());
  if (out.empty()) throw ValidationError("no manifest entries for split " + std::to_string(split) + " set " + set);
  return out;
}

// All distinct videos in manifest order.
std::vector<const ManifestEntry*> unique_videos(const DatasetManifest& m) {
  std::vector<const ManifestEntry*> out;
  std::set<std::string> seen;
  for (const auto& e : m.entries)
    if (seen.insert(e.video_id).second) out.push_back(&e);
  if (out.empty()) throw ValidationError("manifest lists no videos");
  return out;
}

fs::path require_path(const fs::path& p, const std::string& video_id, const char* what) {
  if (p.empty()) throw ValidationError("video '" + video_id + "' has no " + what + " path in the manifest");
  return p;
}

PoseSequence load_poses(const ManifestEntry& e) {
  auto seq = read_pose_file(require_path(e.pose, e.video_id, "pose"), e.video_id);
  seq.validate();
  return seq;
}

FlowQuantParams flow_params(const Ctx& ctx) {
  FlowQuantParams p;
  p.a = ctx.cfg.get_double("flow.a", p.a);
  p.b = ctx.cfg.get_double("flow.b", p.b);
  if (p.a == 0.0) throw ValidationError("flow.a must be non-zero");
  return p;
}

BoxConfig box_config(const Ctx& ctx) {
  BoxConfig b;
  b.hand_scale = ctx.cfg.get_double("boxes.hand_scale", b.hand_scale);
  b.body_dilation = ctx.cfg.get_double("boxes.body_dilation", b.body_dilation);
  b.include_full_body = ctx.cfg.get_bool("boxes.full_body", b.include_full_body);
  if (!(b.hand_scale > 0.0) || b.body_dilation < 0.0) throw ValidationError("box scales must be positive");
  return b;
}

int patch_side(const Ctx& ctx) {
  const long side = ctx.cfg.get_int("extract.patch_side", 224);
  if (side < 1 || side > 4096) throw ValidationError("extract.patch_side must be in [1, 4096]");
  return static_cast<int>(side);
}

std::size_t provider_dim(const Ctx& ctx) {
  const long dim = ctx.cfg.get_int("provider.dim", 64);
  if (dim < 1) throw ValidationError("provider.dim must be positive");
  return static_cast<std::size_t>(dim);
}

std::vector<Part> parse_parts(const std::string& s) {
  if (s.find_first_not_of("0123456789") == std::string::npos && !s.empty()) return parts_for_count(std::stoi(s));
  std::vector<Part> parts;
  for (const auto& name : split_list(s)) parts.push_back(parse_part(name));
  if (parts.empty()) throw ValidationError("empty part list");
  return parts;
}

AggregationConfig aggregation_config(const Ctx& ctx) {
  AggregationConfig a;
  a.scheme = parse_scheme(ctx.cfg.get_string("aggregate.scheme", std::string(to_string(a.scheme))));
  a.delta_t = static_cast<int>(ctx.cfg.get_int("aggregate.delta_t", a.delta_t));
  if (auto p = ctx.cfg.get("aggregate.parts")) a.parts = parse_parts(*p);
  a.streams = parse_stream_selection(ctx.cfg.get_string("aggregate.streams", std::string(to_string(a.streams))));
  a.validate();
  return a;
}

hlpf::HlpfConfig hlpf_config(const Ctx& ctx) {
  hlpf::HlpfConfig h;
  h.codebook_size = static_cast<int>(ctx.cfg.get_int("hlpf.codebook_size", h.codebook_size));
  h.delta_t = static_cast<int>(ctx.cfg.get_int("hlpf.delta_t", h.delta_t));
  h.seed = ctx.seed;
  const auto init = ctx.cfg.get_string("hlpf.init", "optimal");
  if (init == "optimal") {
    h.init = KMeansInit::optimal;
  } else if (init == "plus_plus") {
    h.init = KMeansInit::plus_plus;
  } else {
    throw ValidationError("hlpf.init must be optimal or plus_plus: " + init);
  }
  h.validate();
  return h;
}

std::vector<fv::GridLevel> parse_pyramid(const std::string& s) {
  std::vector<fv::GridLevel> levels;
  for (const auto& item : split_list(s)) {
    int cols = 0, rows = 0;
    char x = 0, extra = 0;
    if (std::sscanf(item.c_str(), "%d%c%d%c", &cols, &x, &rows, &extra) != 3 || x != 'x' || cols < 1 || rows < 1)
      throw ValidationError("pyramid level must look like 1x3: " + item);
    levels.push_back({cols, rows});
  }
  if (levels.empty()) throw ValidationError("empty pyramid");
  return levels;
}

std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

fs::path video_file(const fs::path& dir, const std::string& id, const char* ext) { return dir / (id + ext); }

// Loads one PCNV per entry into a feature matrix.
MatrixD load_features(const fs::path& dir, const std::vector<const ManifestEntry*>& entries, unsigned jobs) {
  std::vector<VideoDescriptor> descs(entries.size());
  parallel_for(entries.size(), jobs,
               [&](std::size_t i) { descs[i] = read_video_descriptor(video_file(dir, entries[i]->video_id, ".pcnv")); });
  MatrixD x;
  for (std::size_t i = 0; i < descs.size(); ++i) {
    if (i > 0 && descs[i].values.size() != descs[0].values.size())
      throw DimensionError("descriptor of '" + entries[i]->video_id + "' has " +
                           std::to_string(descs[i].values.size()) + " values, expected " +
                           std::to_string(descs[0].values.size()));
    std::vector<double> row(descs[i].values.begin(), descs[i].values.end());
    x.push_row(row);
  }
  return x;
}

std::map<std::string, std::string> load_labels(const Ctx& ctx) {
  std::map<std::string, std::string> labels;
  if (auto path = ctx.cfg.get("labels")) {
    std::istringstream in(io::read_text(*path));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string id, label, extra;
      if (!(ls >> id >> label) || (ls >> extra))
        throw FormatError(*path + " line " + std::to_string(line_no) + ": expected 'video_id label'");
      if (id == "video_id" && line_no == 1) continue;
      labels[id] = label;
    }
  } else if (ctx.cfg.has("manifest")) {
    const auto m = load_manifest(ctx);
    for (const auto& e : m.entries) labels[e.video_id] = e.label;
  } else {
    throw ValidationError("labels need --labels or --manifest");
  }
  return labels;
}

std::vector<std::string> labels_for_rows(const learn::ScoreMatrix& s, const std::map<std::string, std::string>& labels) {
  std::vector<std::string> out;
  for (const auto& id : s.row_ids) {
    auto it = labels.find(id);
    if (it == labels.end()) throw LookupError("no label for video '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

// ---- subcommands ----

void cmd_synth(Ctx& ctx) {
  synth::SyntheticConfig c;
  c.train_per_class = static_cast<int>(ctx.cfg.get_int("synth.train_per_class", c.train_per_class));
  c.test_per_class = static_cast<int>(ctx.cfg.get_int("synth.test_per_class", c.test_per_class));
  c.width = static_cast<int>(ctx.cfg.get_int("synth.width", c.width));
  c.height = static_cast<int>(ctx.cfg.get_int("synth.height", c.height));
  c.min_frames = static_cast<int>(ctx.cfg.get_int("synth.min_frames", c.min_frames));
  c.max_frames = static_cast<int>(ctx.cfg.get_int("synth.max_frames", c.max_frames));
  c.seed = ctx.seed;
  const auto dir = ctx.out_path();
  const auto videos = synth::make_dataset(c);
  const auto m = synth::write_dataset(videos, dir);
  *ctx.out << "wrote " << m.entries.size() << " videos to " << (dir / "manifest.tsv").string() << "\n";
}

void cmd_quantize_flow(Ctx& ctx) {
  const auto q = flow_params(ctx);
  if (auto flow = ctx.cfg.get("flow")) {
    const auto img = quantize_flow(read_flow(*flow), q);
    write_ppm(ctx.out_path(), img);
    return;
  }
  const auto m = load_manifest(ctx);
  const auto videos = unique_videos(m);
  std::vector<std::vector<Image>> images(videos.size());
  parallel_for(videos.size(), ctx.jobs, [&](std::size_t i) {
    const auto& e = *videos[i];
    const auto dir = require_path(e.flow, e.video_id, "flow");
    for (std::size_t t = 0; fs::exists(flow_path(dir, t)); ++t) images[i].push_back(quantize_flow(read_flow(flow_path(dir, t)), q));
  });
  const auto out = ctx.out_path();
  for (std::size_t i = 0; i < videos.size(); ++i)
    for (std::size_t t = 0; t < images[i].size(); ++t) write_ppm(frame_path(out / videos[i]->video_id, t), images[i][t]);
}

void cmd_crop_parts(Ctx& ctx) {
  const Image frame = read_ppm(ctx.require("frame"));
  const auto seq = read_pose_file(ctx.require("pose"));
  seq.validate();
  const long index = ctx.cfg.get_int("frame_index", 0);
  if (index < 0 || static_cast<std::size_t>(index) >= seq.length())
    throw ValidationError("frame index " + std::to_string(index) + " outside the pose sequence");
  const auto boxes = part_boxes(seq.frames[static_cast<std::size_t>(index)], frame.width, frame.height, box_config(ctx));
  const int side = patch_side(ctx);
  std::vector<Image> patches;
  std::string table = "part\tx0\ty0\tx1\ty1\n";
  for (const auto& b : boxes) {
    const Patch p = crop_resize(frame, b, side);
    Image img(side, side);
    for (std::size_t i = 0; i < p.data.size(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(p.data[i]), 0.0f, 255.0f));
    patches.push_back(std::move(img));
    table += std::string(to_string(b.part)) + "\t" + io::format_double(b.x0) + "\t" + io::format_double(b.y0) + "\t" +
             io::format_double(b.x1) + "\t" + io::format_double(b.y1) + "\n";
  }
  const auto out = ctx.out_path();
  for (std::size_t i = 0; i < boxes.size(); ++i)
    write_ppm(out / (std::string(to_string(boxes[i].part)) + ".ppm"), patches[i]);
  io::write_text(out / "boxes.tsv", table);
}

void cmd_embed_import(Ctx& ctx) {
  const std::string path = ctx.require("in");
  std::istringstream in(io::read_text(path));
  std::vector<DescriptorRecord> records;
  std::set<DescriptorKey> seen;
  std::size_t dim = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    DescriptorRecord r;
    long frame = -1;
    std::string part, stream;
    if (!(ls >> r.key.video_id >> frame >> part >> stream) || frame < 0)
      throw FormatError(path + " line " + std::to_string(line_no) + ": expected 'video_id frame part stream values...'");
    r.key.frame = static_cast<std::uint32_t>(frame);
    r.key.part = parse_part(part);
    r.key.stream = parse_stream(stream);
    double v = 0.0;
    while (ls >> v) r.values.push_back(static_cast<float>(v));
    if (!ls.eof()) throw FormatError(path + " line " + std::to_string(line_no) + ": bad number");
    if (r.values.empty()) throw ValidationError(path + " line " + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = r.values.size();
    if (r.values.size() != dim)
      throw DimensionError(path + " line " + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values");
    if (!seen.insert(r.key).second) throw ValidationError("duplicate descriptor " + to_string(r.key));
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ValidationError(path + " holds no descriptors");
  if (auto want = ctx.cfg.get("provider.dim"); want && provider_dim(ctx) != dim)
    throw DimensionError("imported descriptors have dimension " + std::to_string(dim) + ", expected " + *want);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  write_descriptor_file(ctx.out_path(), dim, records);
  *ctx.out << "imported " << records.size() << " descriptors of dimension " << dim << "\n";
}

void cmd_extract_series(Ctx& ctx) {
  ProviderConfig pc;
  const auto kind = ctx.cfg.get_string("provider.kind", "test_embedder");
  if (kind == "test_embedder") {
    pc.kind = ProviderConfig::Kind::test_embedder;
  } else if (kind == "file_store") {
    pc.kind = ProviderConfig::Kind::file_store;
    pc.store_path = ctx.require("provider.store");
  } else {
    throw ValidationError("provider.kind must be test_embedder or file_store: " + kind);
  }
  pc.dim = provider_dim(ctx);
  pc.seed = ctx.seed;
  ExtractConfig ec;
  ec.boxes = box_config(ctx);
  ec.patch_side = patch_side(ctx);
  ec.flow_quant = flow_params(ctx);

  const auto m = load_manifest(ctx);
  const auto out = ctx.out_path();
  const auto provider = make_provider(pc);
  const auto videos = unique_videos(m);
  std::vector<std::vector<DescriptorRecord>> results(videos.size());
  parallel_for(videos.size(), ctx.jobs, [&](std::size_t i) {
    const auto& e = *videos[i];
    const auto poses = load_poses(e);
    VideoInput input;
    if (provider->uses_patches()) {
      const auto frames = require_path(e.frames, e.video_id, "frames");
      const auto flows = require_path(e.flow, e.video_id, "flow");
      for (std::size_t t = 0; t < poses.length(); ++t) input.frames.push_back(read_ppm(frame_path(frames, t)));
      for (std::size_t t = 0; t + 1 < poses.length(); ++t)
        input.flow_images.push_back(quantize_flow(read_flow(flow_path(flows, t)), ec.flow_quant));
      input.width = input.frames.front().width;
      input.height = input.frames.front().height;
      for (const auto& f : input.frames)
        if (f.width != input.width || f.height != input.height)
          throw DimensionError("frames of '" + e.video_id + "' differ in size");
    }
    results[i] = series_to_records(e.video_id, extract_series(input, poses, *provider, ec));
  });
  for (std::size_t i = 0; i < videos.size(); ++i)
    write_descriptor_file(video_file(out, videos[i]->video_id, ".pcnf"), pc.dim, results[i]);
  *ctx.out << "extracted " << videos.size() << " videos\n";
}

void cmd_aggregate(Ctx& ctx) {
  const auto agg = aggregation_config(ctx);
  if (!ctx.cfg.has("series")) {
    const long dim = ctx.cfg.get_int("aggregate.dim", static_cast<long>(provider_dim(ctx)));
    if (dim < 1) throw ValidationError("descriptor dimension must be positive");
    *ctx.out << descriptor_length(agg, static_cast<std::size_t>(dim)) << "\n";
    return;
  }
  const fs::path series_dir = ctx.require("series");
  const auto m = load_manifest(ctx);
  const int split = split_of(ctx);
  const auto entries = entries_for(m, split, "all");
  const auto out = ctx.out_path();

  std::vector<std::vector<DescriptorSeries>> series(entries.size());
  parallel_for(entries.size(), ctx.jobs, [&](std::size_t i) {
    const auto& id = entries[i]->video_id;
    series[i] = records_to_series(read_descriptor_file(video_file(series_dir, id, ".pcnf")), id);
  });

  Normalizer norm;
  if (auto path = ctx.cfg.get("aggregate.normalizer")) {
    norm = Normalizer::load(*path);
  } else {
    std::vector<DescriptorSeries> training;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i]->train) training.insert(training.end(), series[i].begin(), series[i].end());
    if (training.empty()) throw ValidationError("no training videos to fit the normalizer");
    norm = fit_normalizer(training);
  }

  std::vector<VideoDescriptor> descs(entries.size());
  parallel_for(entries.size(), ctx.jobs, [&](std::size_t i) { descs[i] = assemble(series[i], agg, norm); });

  for (std::size_t i = 0; i < entries.size(); ++i)
    write_video_descriptor(video_file(out, entries[i]->video_id, ".pcnv"), descs[i]);
  norm.save(out / "normalizer.txt");
  io::write_text(out / "layout.tsv", describe_layout(descs.front()));
  *ctx.out << "aggregated " << entries.size() << " videos, " << descs.front().values.size() << " dims\n";
}

void cmd_hlpf_fit(Ctx& ctx) {
  const auto hc = hlpf_config(ctx);
  const auto m = load_manifest(ctx);
  const auto entries = entries_for(m, split_of(ctx), "train");
  std::vector<hlpf::VideoFeatures> feats(entries.size());
  parallel_for(entries.size(), ctx.jobs, [&](std::size_t i) { feats[i] = hlpf::video_features(load_poses(*entries[i]), hc); });
  const auto codebook = hlpf::fit_codebooks(feats, hc);
  codebook.save(ctx.out_path());
  *ctx.out << "fitted " << codebook.dims() << " codebooks of size " << codebook.size() << "\n";
}

void cmd_hlpf_encode(Ctx& ctx) {
  const auto hc = hlpf_config(ctx);
  const auto codebook = hlpf::Codebook::load(ctx.require("codebook"));
  const auto m = load_manifest(ctx);
  const auto entries = entries_for(m, split_of(ctx), "all");
  const auto out = ctx.out_path();
  std::vector<VideoDescriptor> descs(entries.size());
  parallel_for(entries.size(), ctx.jobs, [&](std::size_t i) {
    descs[i] = single_block_descriptor(hlpf::encode_video(load_poses(*entries[i]), codebook, hc), Block::histogram);
  });
  for (std::size_t i = 0; i < entries.size(); ++i)
    write_video_descriptor(video_file(out, entries[i]->video_id, ".pcnv"), descs[i]);
}

void cmd_link_poses(Ctx& ctx) {
  const auto candidates = link::read_candidate_file(ctx.require("candidates"));
  std::vector<FlowField> flows;
  if (candidates.size() > 1) {
    const fs::path dir = ctx.require("flow");
    for (std::size_t t = 0; t + 1 < candidates.size(); ++t) flows.push_back(read_flow(flow_path(dir, t)));
  }
  link::LinkerConfig lc;
  lc.lambda = ctx.cfg.get_double("link.lambda", lc.lambda);
  if (ctx.cfg.has("link.score_floor")) lc.score_floor = ctx.cfg.get_double("link.score_floor", 0.0);
  const auto result = link::link(candidates, flows, lc, ctx.cfg.get_string("video_id", ""));
  write_pose_file(ctx.out_path(), result.sequence);
  *ctx.out << "objective " << io::format_double(result.objective) << "\n";
}

struct FvParams {
  int components = 8;
  std::size_t pca_dim = 0;
  std::size_t sample = 100000;
  fv::GmmFitOptions gmm;
  std::vector<fv::GridLevel> pyramid = fv::default_pyramid();
};

FvParams fv_params(const Ctx& ctx) {
  FvParams p;
  p.components = static_cast<int>(ctx.cfg.get_int("fv.components", p.components));
  const long pca = ctx.cfg.get_int("fv.pca_dim", 0);
  const long sample = ctx.cfg.get_int("fv.sample", static_cast<long>(p.sample));
  if (p.components < 1 || pca < 0 || sample < 1) throw ValidationError("fv settings must be positive");
  p.pca_dim = static_cast<std::size_t>(pca);
  p.sample = static_cast<std::size_t>(sample);
  p.gmm.max_iterations = static_cast<int>(ctx.cfg.get_int("fv.max_iterations", p.gmm.max_iterations));
  if (auto s = ctx.cfg.get("fv.pyramid")) p.pyramid = parse_pyramid(*s);
  return p;
}

void cmd_fv_fit(Ctx& ctx) {
  const auto p = fv_params(ctx);
  const auto m = load_manifest(ctx);
  const auto entries = entries_for(m, split_of(ctx), "train");
  std::vector<fv::LocalDescriptorSet> sets(entries.size());
  parallel_for(entries.size(), ctx.jobs, [&](std::size_t i) {
    sets[i] = fv::read_local_descriptors(require_path(entries[i]->descriptors, entries[i]->video_id, "descriptors"));
  });
  MatrixD all;
  for (const auto& s : sets)
    for (std::size_t r = 0; r < s.size(); ++r) all.push_row(s.descriptors.row(r));
  if (all.rows() < static_cast<std::size_t>(p.components))
    throw ValidationError("only " + std::to_string(all.rows()) + " training descriptors for " +
                          std::to_string(p.components) + " components");
  MatrixD sample = all;
  if (all.rows() > p.sample) {
    std::vector<std::size_t> idx(all.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(ctx.seed, 1));
    rng.shuffle(idx);
    idx.resize(p.sample);
    std::sort(idx.begin(), idx.end());
    sample = MatrixD();
    for (auto i : idx) sample.push_row(all.row(i));
  }
  const auto pca = fv::pca_fit(sample, p.pca_dim);
  const auto fit = fv::gmm_fit(fv::pca_apply(pca, sample), p.components, derive_seed(ctx.seed, 2), p.gmm);
  const auto out = ctx.out_path();
  pca.save(out / "pca.ppca");
  fit.model.save(out / "gmm.pgmm");
  *ctx.out << "fitted GMM with " << p.components << " components on " << sample.rows() << " descriptors, "
           << fit.iterations << " EM iterations\n";
}

void cmd_fv_encode(Ctx& ctx) {
  const auto p = fv_params(ctx);
  const fs::path model = ctx.require("model");
  const auto pca = fv::PcaModel::load(model / "pca.ppca");
  const auto gmm = fv::GmmModel::load(model / "gmm.pgmm");
  if (gmm.dim() != pca.output_dim()) throw DimensionError("GMM and PCA dimensions disagree");
  const auto m = load_manifest(ctx);
  const auto entries = entries_for(m, split_of(ctx), "all");
  const auto out = ctx.out_path();
  std::vector<VideoDescriptor> descs(entries.size());
  parallel_for(entries.size(), ctx.jobs, [&](std::size_t i) {
    auto set = fv::read_local_descriptors(require_path(entries[i]->descriptors, entries[i]->video_id, "descriptors"));
    if (set.size() > 0 && set.descriptors.cols() != pca.input_dim())
      throw DimensionError("local descriptors of '" + entries[i]->video_id + "' do not match the PCA input size");
    if (set.size() > 0) set.descriptors = fv::pca_apply(pca, set.descriptors);
    const auto code = fv::pyramid_encode(set, gmm, p.pyramid);
    descs[i] = single_block_descriptor(std::vector<float>(code.begin(), code.end()), Block::fisher);
  });
  for (std::size_t i = 0; i < entries.size(); ++i)
    write_video_descriptor(video_file(out, entries[i]->video_id, ".pcnv"), descs[i]);
}

void cmd_train(Ctx& ctx) {
  const auto m = load_manifest(ctx);
  const auto entries = entries_for(m, split_of(ctx), "train");
  const auto x = load_features(ctx.require("descriptors"), entries, ctx.jobs);
  std::vector<std::string> labels;
  for (const auto* e : entries) labels.push_back(e->label);
  const double C = ctx.cfg.get_double("svm.C", 1.0);
  const auto kind = ctx.cfg.get_string("svm.kind", "linear");
  learn::SvmModel model;
  if (kind == "linear") {
    learn::LinearSvmParams p;
    p.C = C;
    p.seed = ctx.seed;
    p.gap_tolerance = ctx.cfg.get_double("svm.tolerance", p.gap_tolerance);
    model = learn::train_linear(x, labels, p);
  } else if (kind == "chi2") {
    learn::Chi2SvmParams p;
    p.C = C;
    p.seed = ctx.seed;
    const auto form = ctx.cfg.get_string("svm.form", "exponential");
    if (form == "exponential") {
      p.form = learn::Chi2Form::exponential;
    } else if (form == "additive") {
      p.form = learn::Chi2Form::additive;
    } else {
      throw ValidationError("svm.form must be exponential or additive: " + form);
    }
    if (ctx.cfg.has("svm.gamma")) p.gamma = ctx.cfg.get_double("svm.gamma", 1.0);
    model = learn::train_chi2(x, labels, p);
  } else {
    throw ValidationError("svm.kind must be linear or chi2: " + kind);
  }
  model.save(ctx.out_path());
  *ctx.out << "trained " << kind << " SVM on " << entries.size() << " videos, " << model.classes.size()
           << " classes\n";
}

void cmd_score(Ctx& ctx) {
  const auto model = learn::SvmModel::load(ctx.require("model"));
  const auto m = load_manifest(ctx);
  const auto entries = entries_for(m, split_of(ctx), ctx.cfg.get_string("set", "test"));
  const auto x = load_features(ctx.require("descriptors"), entries, ctx.jobs);
  std::vector<std::string> ids;
  for (const auto* e : entries) ids.push_back(e->video_id);
  learn::score(model, x, ids).save(ctx.out_path());
}

void cmd_fuse(Ctx& ctx) {
  const auto paths = split_list(ctx.require("scores"));
  if (paths.empty()) throw ValidationError("fuse needs at least one score file");
  std::vector<learn::ScoreMatrix> scores;
  for (const auto& p : paths) scores.push_back(learn::ScoreMatrix::load(p));
  std::vector<double> weights;
  if (auto w = ctx.cfg.get("fuse.weights")) {
    for (const auto& item : split_list(*w)) {
      Config c;
      c.set("w", item);
      weights.push_back(c.get_double("w", 0.0));
    }
  }
  learn::late_fuse(scores, weights, ctx.cfg.get_bool("fuse.standardize", false)).save(ctx.out_path());
}

void cmd_eval(Ctx& ctx) {
  const auto s = learn::ScoreMatrix::load(ctx.require("scores"));
  const auto labels = labels_for_rows(s, load_labels(ctx));
  const auto metric = ctx.cfg.get_string("eval.metric", "accuracy");
  double v = 0.0;
  if (metric == "accuracy") {
    v = eval::accuracy(s, labels);
  } else if (metric == "map") {
    eval::MapOptions o;
    if (auto ex = ctx.cfg.get("eval.exclude_class")) o.exclude_class = *ex;
    v = eval::mean_ap(s, labels, o);
  } else {
    throw ValidationError("eval.metric must be accuracy or map: " + metric);
  }
  *ctx.out << format4(v) << "\n";
}

void cmd_report(Ctx& ctx) {
  const auto a = learn::ScoreMatrix::load(ctx.require("a"));
  const auto b = learn::ScoreMatrix::load(ctx.require("b"));
  const auto labels = labels_for_rows(a, load_labels(ctx));
  const auto report = eval::rank_diff_report(a, b, labels);
  const auto out = ctx.out_path();
  io::write_text(out / "videos.tsv", report.videos_table());
  io::write_text(out / "classes.tsv", report.classes_table());
}

void cmd_selfcheck(Ctx& ctx, int& status) {
  const long cases = ctx.cfg.get_int("selfcheck.cases", 200);
  if (cases < 1) throw ValidationError("selfcheck.cases must be positive");
  status = selfcheck(static_cast<std::size_t>(cases), ctx.seed, *ctx.out);
}

// ---- argument plumbing ----

struct Command {
  CLI::App* app = nullptr;
  std::vector<std::pair<CLI::Option*, std::string>> bindings;
  std::deque<std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> flag_bindings;
  std::deque<bool> flags;
  std::vector<std::string> list_values;
  CLI::Option* list_option = nullptr;
  std::string list_key;
  std::function<void(Ctx&, int&)> body;

  void option(const std::string& name, const std::string& key, const std::string& help) {
    auto& slot = values.emplace_back();
    bindings.emplace_back(app->add_option(name, slot, help), key);
  }
  void flag(const std::string& name, const std::string& key, const std::string& help) {
    auto& slot = flags.emplace_back(false);
    flag_bindings.emplace_back(app->add_flag(name, slot, help), key);
  }
  void list(const std::string& name, const std::string& key, const std::string& help) {
    list_option = app->add_option(name, list_values, help);
    list_key = key;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pose-based video descriptors: extraction, aggregation, encoding, training and evaluation"};
  app.name("pcnn");
  app.require_subcommand(1);
  std::deque<Command> commands;

  auto add = [&](const std::string& name, const std::string& help, std::function<void(Ctx&)> body) -> Command& {
    auto& c = commands.emplace_back();
    c.app = app.add_subcommand(name, help);
    c.body = [body](Ctx& ctx, int&) { body(ctx); };
    c.option("--config", "__config", "Key-value settings file; flags override its values");
    c.option("--out", "out", "Output file or directory");
    c.option("--jobs", "jobs", "Worker threads (default 1)");
    c.option("--seed", "seed", "Random seed (falls back to PCNN_SEED, then 0)");
    return c;
  };
  auto manifest_opts = [](Command& c) {
    c.option("--manifest", "manifest", "Dataset manifest (TSV)");
    c.option("--split", "split", "Split number (default 1)");
  };
  auto agg_opts = [](Command& c) {
    c.option("--scheme", "aggregate.scheme", "max | max_min | static_dyn_max | static_dyn_max_min | mean");
    c.option("--parts", "aggregate.parts", "5, 4, or a comma-separated part list");
    c.option("--streams", "aggregate.streams", "appearance | flow | both");
    c.option("--delta-t", "aggregate.delta_t", "Frame offset of dynamic features (default 4)");
  };
  auto box_opts = [](Command& c) {
    c.option("--hand-scale", "boxes.hand_scale", "Hand box side relative to head-hip distance");
    c.option("--body-dilation", "boxes.body_dilation", "Body box growth per side");
    c.option("--full-body", "boxes.full_body", "Include the full-body part (true/false)");
    c.option("--patch-side", "extract.patch_side", "Patch side in pixels (default 224)");
  };
  auto flow_opts = [](Command& c) {
    c.option("--flow-a", "flow.a", "Flow quantization scale (default 16)");
    c.option("--flow-b", "flow.b", "Flow quantization offset (default 128)");
  };
  auto label_opts = [](Command& c) {
    c.option("--manifest", "manifest", "Manifest providing labels");
    c.option("--labels", "labels", "Two-column 'video_id label' file");
  };

  {
    auto& c = add("synth", "Write the bundled two-class synthetic dataset", cmd_synth);
    c.option("--train-per-class", "synth.train_per_class", "Training clips per class (default 20)");
    c.option("--test-per-class", "synth.test_per_class", "Test clips per class (default 10)");
    c.option("--width", "synth.width", "Frame width");
    c.option("--height", "synth.height", "Frame height");
    c.option("--min-frames", "synth.min_frames", "Shortest clip");
    c.option("--max-frames", "synth.max_frames", "Longest clip");
  }
  {
    auto& c = add("quantize-flow", "Convert flow fields to 3-channel flow images", cmd_quantize_flow);
    c.option("--flow", "flow", "Single flow field (PFLW); otherwise every video in --manifest");
    c.option("--manifest", "manifest", "Dataset manifest");
    flow_opts(c);
  }
  {
    auto& c = add("crop-parts", "Crop the part patches of one frame", cmd_crop_parts);
    c.option("--frame", "frame", "Frame image (PPM)");
    c.option("--pose", "pose", "Pose file");
    c.option("--frame-index", "frame_index", "Pose frame to use (default 0)");
    box_opts(c);
  }
  {
    auto& c = add("embed-import", "Import text descriptors into a descriptor store", cmd_embed_import);
    c.option("--in", "in", "Lines 'video_id frame part stream v1 ... vk'");
    c.option("--dim", "provider.dim", "Expected dimension");
  }
  {
    auto& c = add("extract-series", "Compute per-frame part descriptors for every video", cmd_extract_series);
    manifest_opts(c);
    c.option("--provider", "provider.kind", "test_embedder | file_store");
    c.option("--store", "provider.store", "Descriptor store for file_store");
    c.option("--dim", "provider.dim", "Descriptor dimension (default 64)");
    box_opts(c);
    flow_opts(c);
  }
  {
    auto& c = add("aggregate", "Aggregate descriptor series into video descriptors", cmd_aggregate);
    manifest_opts(c);
    agg_opts(c);
    c.option("--series", "series", "Directory of per-video series; without it, print the descriptor length");
    c.option("--dim", "aggregate.dim", "Frame descriptor dimension for length mode");
    c.option("--normalizer", "aggregate.normalizer", "Use this normalizer instead of fitting one");
  }
  {
    auto& c = add("hlpf-fit", "Fit pose-feature codebooks on training videos", cmd_hlpf_fit);
    manifest_opts(c);
    c.option("--codebook-size", "hlpf.codebook_size", "Centers per dimension (default 20)");
    c.option("--delta-t", "hlpf.delta_t", "Frame offset of dynamic features (default 1)");
    c.option("--init", "hlpf.init", "optimal | plus_plus");
  }
  {
    auto& c = add("hlpf-encode", "Encode pose-feature histograms", cmd_hlpf_encode);
    manifest_opts(c);
    c.option("--codebook", "codebook", "Codebook file from hlpf-fit");
    c.option("--delta-t", "hlpf.delta_t", "Frame offset of dynamic features (default 1)");
  }
  {
    auto& c = add("link-poses", "Link per-frame pose candidates into one track", cmd_link_poses);
    c.option("--candidates", "candidates", "Candidate file");
    c.option("--flow", "flow", "Directory of NNNN.pflw flow fields");
    c.option("--lambda", "link.lambda", "Flow-inconsistency weight (default 1)");
    c.option("--score-floor", "link.score_floor", "Drop candidates scoring below this");
    c.option("--video-id", "video_id", "Video id recorded in the output");
  }
  auto fv_opts = [](Command& c) {
    c.option("--components", "fv.components", "GMM components (default 8)");
    c.option("--pca-dim", "fv.pca_dim", "PCA output dimension (default half the input)");
    c.option("--pyramid", "fv.pyramid", "Grid levels, e.g. 1x1,1x3");
  };
  {
    auto& c = add("fv-fit", "Fit PCA and GMM on training local descriptors", cmd_fv_fit);
    manifest_opts(c);
    fv_opts(c);
    c.option("--sample", "fv.sample", "Maximum descriptors used for fitting");
    c.option("--max-iterations", "fv.max_iterations", "EM iteration cap");
  }
  {
    auto& c = add("fv-encode", "Encode Fisher vectors", cmd_fv_encode);
    manifest_opts(c);
    fv_opts(c);
    c.option("--model", "model", "Directory from fv-fit");
  }
  {
    auto& c = add("train", "Train one-vs-rest SVMs", cmd_train);
    manifest_opts(c);
    c.option("--descriptors", "descriptors", "Directory of per-video descriptors");
    c.option("--svm", "svm.kind", "linear | chi2");
    c.option("--C", "svm.C", "Regularization constant (default 1)");
    c.option("--form", "svm.form", "chi2 kernel form: exponential | additive");
    c.option("--gamma", "svm.gamma", "chi2 bandwidth (default 1 / mean distance)");
  }
  {
    auto& c = add("score", "Score videos with a trained model", cmd_score);
    manifest_opts(c);
    c.option("--descriptors", "descriptors", "Directory of per-video descriptors");
    c.option("--model", "model", "Model file from train");
    c.option("--set", "set", "train | test | all (default test)");
  }
  {
    auto& c = add("fuse", "Average score matrices", cmd_fuse);
    c.list("--scores", "scores", "Score files (repeat the flag)");
    c.option("--weights", "fuse.weights", "Comma-separated weights");
    c.flag("--standardize", "fuse.standardize", "Standardize each class column first");
  }
  {
    auto& c = add("eval", "Accuracy or mAP of a score file", cmd_eval);
    c.option("--scores", "scores", "Score file");
    label_opts(c);
    c.option("--metric", "eval.metric", "accuracy | map");
    c.option("--exclude-class", "eval.exclude_class", "Class left out of mAP");
  }
  {
    auto& c = add("report", "Per-video rank differences and per-class accuracy of two scorers", cmd_report);
    c.option("--a", "a", "Score file of the first scorer");
    c.option("--b", "b", "Score file of the second scorer");
    label_opts(c);
  }
  {
    auto& c = add("selfcheck", "Run the invariant suite on synthetic data", [](Ctx&) {});
    c.body = cmd_selfcheck;
    c.option("--cases", "selfcheck.cases", "Random cases per check (default 200)");
  }

  std::vector<std::string> argv_store{"pcnn"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto chosen = app.get_subcommands();
    out << (chosen.empty() ? app.help() : chosen.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto chosen = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (chosen.empty() ? app.help() : chosen.front()->help());
    return 1;
  }

  Command* cmd = nullptr;
  for (auto& c : commands)
    if (c.app->parsed()) cmd = &c;

  try {
    Ctx ctx;
    ctx.out = &out;
    // Bindings and values share insertion order.
    for (std::size_t i = 0; i < cmd->bindings.size(); ++i) {
      const auto& [opt, key] = cmd->bindings[i];
      if (key == "__config") {
        if (opt->count() > 0) ctx.cfg = Config::load(cmd->values[i]);
      }
    }
    for (std::size_t i = 0; i < cmd->bindings.size(); ++i) {
      const auto& [opt, key] = cmd->bindings[i];
      if (key != "__config" && opt->count() > 0) ctx.cfg.set(key, cmd->values[i]);
    }
    for (std::size_t i = 0; i < cmd->flag_bindings.size(); ++i)
      if (cmd->flag_bindings[i].first->count() > 0) ctx.cfg.set(cmd->flag_bindings[i].second, cmd->flags[i] ? "true" : "false");
    if (cmd->list_option && cmd->list_option->count() > 0) {
      std::string joined;
      for (const auto& v : cmd->list_values) joined += (joined.empty() ? "" : ",") + v;
      ctx.cfg.set(cmd->list_key, joined);
    }

    const long jobs = ctx.cfg.get_int("jobs", 1);
    if (jobs < 1 || jobs > 1024) throw ValidationError("--jobs must be in [1, 1024]");
    ctx.jobs = static_cast<unsigned>(jobs);
    if (auto s = ctx.cfg.get("seed")) {
      ctx.seed = parse_seed(*s, "seed");
    } else if (const char* env = std::getenv("PCNN_SEED"); env && *env) {
      ctx.seed = parse_seed(env, "PCNN_SEED");
    }

    int status = 0;
    cmd->body(ctx, status);
    return status;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pcnn::cli
