#include "pcnn/hlpf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn::hlpf {

void HlpfConfig::validate() const {
  if (codebook_size < 2) throw ValidationError("codebook size must be at least 2");
  if (delta_t < 1) throw ValidationError("HLPF delta_t must be at least 1");
}

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(radians, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

double orientation(double dx, double dy) {
  if (dx == 0.0 && dy == 0.0) return 0.0;
  const double a = std::atan2(dy, dx);
  return a <= -std::numbers::pi ? std::numbers::pi : a;
}

PoseSequence normalize_poses(const PoseSequence& seq, const HlpfConfig&) {
  seq.validate();
  const auto& first = seq.frames.front();
  const std::size_t head = first.index_of(joint::kHead);
  const std::size_t hip = first.index_of(joint::kHipCenter);

  std::vector<double> sizes;
  sizes.reserve(seq.length());
  for (const auto& f : seq.frames)
    sizes.push_back(std::hypot(f.joints[hip].x - f.joints[head].x, f.joints[hip].y - f.joints[head].y));
  std::sort(sizes.begin(), sizes.end());
  const std::size_t n = sizes.size();
  const double person = n % 2 == 1 ? sizes[n / 2] : 0.5 * (sizes[n / 2 - 1] + sizes[n / 2]);
  if (!(person > 0.0)) throw DegenerateGeometryError("person size (head to hip centre) is zero");

  PoseSequence out = seq;
  for (auto& f : out.frames) {
    const Point2 h = f.joints[head];
    for (auto& p : f.joints) p = Point2{(p.x - h.x) / person, (p.y - h.y) / person};
  }
  return out;
}

std::vector<double> static_features(const Pose& pose) {
  pose.validate();
  const FeatureLayout layout{pose.size()};
  const std::size_t J = pose.size();
  std::vector<double> f;
  f.reserve(layout.static_dim());
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = i + 1; j < J; ++j)
      f.push_back(std::hypot(pose.joints[j].x - pose.joints[i].x, pose.joints[j].y - pose.joints[i].y));
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = i + 1; j < J; ++j)
      f.push_back(orientation(pose.joints[j].x - pose.joints[i].x, pose.joints[j].y - pose.joints[i].y));
  for (std::size_t v = 0; v < J; ++v) {
    const Point2 c = pose.joints[v];
    for (std::size_t i = 0; i < J; ++i) {
      if (i == v) continue;
      for (std::size_t k = i + 1; k < J; ++k) {
        if (k == v) continue;
        const double ax = pose.joints[i].x - c.x, ay = pose.joints[i].y - c.y;
        const double bx = pose.joints[k].x - c.x, by = pose.joints[k].y - c.y;
        const bool degenerate = (ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0);
        f.push_back(degenerate ? 0.0 : std::atan2(std::abs(ax * by - ay * bx), ax * bx + ay * by));
      }
    }
  }
  return f;
}

namespace {

MatrixD dynamic_from_normalized(const PoseSequence& norm, const MatrixD& static_rows, int delta_t) {
  const std::size_t J = norm.frames.front().size();
  const FeatureLayout layout{J};
  const std::size_t T = norm.length();
  const auto d = static_cast<std::size_t>(delta_t);
  MatrixD out(T > d ? T - d : 0, layout.dynamic_dim());
  for (std::size_t t = 0; t + d < T; ++t) {
    auto row = out.row(t);
    const auto a = static_rows.row(t);
    const auto b = static_rows.row(t + d);
    std::size_t c = 0;
    for (std::size_t s = 0; s < layout.static_dim(); ++s, ++c)
      row[c] = layout.static_is_angle(s) ? wrap_angle(b[s] - a[s]) : b[s] - a[s];
    for (std::size_t j = 0; j < J; ++j) {
      const double dx = norm.frames[t + d].joints[j].x - norm.frames[t].joints[j].x;
      const double dy = norm.frames[t + d].joints[j].y - norm.frames[t].joints[j].y;
      row[c++] = dx;
      row[c++] = dy;
      row[c++] = orientation(dx, dy);
    }
  }
  return out;
}

MatrixD static_rows_of(const PoseSequence& seq) {
  MatrixD rows(0, FeatureLayout{seq.frames.front().size()}.static_dim());
  for (const auto& f : seq.frames) {
    const auto s = static_features(f);
    rows.push_row(s);
  }
  return rows;
}

}  // namespace

MatrixD dynamic_features(const PoseSequence& seq, const HlpfConfig& config) {
  config.validate();
  seq.validate();
  return dynamic_from_normalized(seq, static_rows_of(seq), config.delta_t);
}

VideoFeatures video_features(const PoseSequence& seq, const HlpfConfig& config) {
  config.validate();
  const auto norm = normalize_poses(seq, config);
  VideoFeatures vf;
  vf.static_rows = static_rows_of(norm);
  vf.dynamic_rows = dynamic_from_normalized(norm, vf.static_rows, config.delta_t);
  return vf;
}

void Codebook::save(const std::filesystem::path& path) const {
  std::string out;
  for (std::size_t d = 0; d < centers.size(); ++d) {
    out += std::to_string(d);
    for (double c : centers[d]) out += " " + io::format_double(c);
    out += "\n";
  }
  io::write_text(path, out);
}

Codebook Codebook::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  Codebook cb;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t index = 0;
    if (!(ls >> index) || index != cb.centers.size())
      throw FormatError(path.string() + ": codebook dimensions must be listed in order");
    std::vector<double> c;
    double v;
    while (ls >> v) c.push_back(v);
    if (!ls.eof()) throw FormatError(path.string() + ": malformed codebook line");
    if (c.size() < 2 || (!cb.centers.empty() && c.size() != cb.centers.front().size()))
      throw FormatError(path.string() + ": inconsistent codebook size");
    cb.centers.push_back(std::move(c));
  }
  if (cb.centers.empty()) throw FormatError(path.string() + ": empty codebook");
  return cb;
}

Codebook fit_codebooks(std::span<const VideoFeatures> training, const HlpfConfig& config) {
  config.validate();
  if (training.empty()) throw ValidationError("HLPF codebooks need training videos");
  const std::size_t n_static = training.front().static_rows.cols();
  const std::size_t n_dynamic = training.front().dynamic_rows.cols();
  for (const auto& v : training)
    if (v.static_rows.cols() != n_static || v.dynamic_rows.cols() != n_dynamic)
      throw DimensionError("training videos disagree on the HLPF feature layout");

  Codebook cb;
  cb.centers.reserve(n_static + n_dynamic);
  std::vector<double> values;
  auto fit_dim = [&](bool dynamic, std::size_t d) {
    values.clear();
    for (const auto& v : training) {
      const MatrixD& m = dynamic ? v.dynamic_rows : v.static_rows;
      for (std::size_t t = 0; t < m.rows(); ++t) values.push_back(m(t, d));
    }
    if (values.empty()) throw ValidationError("no training values for an HLPF feature dimension");
    cb.centers.push_back(kmeans_1d(values, config.codebook_size, config.seed + cb.centers.size(), config.init).centers);
  };
  for (std::size_t d = 0; d < n_static; ++d) fit_dim(false, d);
  for (std::size_t d = 0; d < n_dynamic; ++d) fit_dim(true, d);
  return cb;
}

std::vector<float> encode_features(const VideoFeatures& features, const Codebook& codebook) {
  const std::size_t n_static = features.static_rows.cols();
  const std::size_t n_dynamic = features.dynamic_rows.cols();
  if (n_static + n_dynamic != codebook.dims())
    throw DimensionError("codebook has " + std::to_string(codebook.dims()) + " dimensions, features have " +
                         std::to_string(n_static + n_dynamic));
  const std::size_t k = codebook.size();
  std::vector<double> hist(codebook.dims() * k, 0.0);
  auto accumulate = [&](const MatrixD& m, std::size_t dim_offset) {
    for (std::size_t t = 0; t < m.rows(); ++t)
      for (std::size_t d = 0; d < m.cols(); ++d) {
        const std::size_t dim = dim_offset + d;
        hist[dim * k + nearest_center(codebook.centers[dim], m(t, d))] += 1.0;
      }
  };
  accumulate(features.static_rows, 0);
  accumulate(features.dynamic_rows, n_static);

  double sq = 0.0;
  for (double h : hist) sq += h * h;
  const double norm = std::sqrt(sq);
  std::vector<float> out(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) out[i] = static_cast<float>(norm > 0.0 ? hist[i] / norm : hist[i]);
  return out;
}

std::vector<float> encode_video(const PoseSequence& seq, const Codebook& codebook, const HlpfConfig& config) {
  return encode_features(video_features(seq, config), codebook);
}

}  // namespace pcnn::hlpf
