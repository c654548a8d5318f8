#include "pcnn/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"
#include "pcnn/rng.hpp"

namespace pcnn::learn {

namespace {
constexpr std::uint32_t kModelVersion = 1;

std::vector<std::string> class_list(std::span<const std::string> labels) {
  std::set<std::string> uniq(labels.begin(), labels.end());
  if (uniq.size() < 2) throw ValidationError("training needs at least two classes");
  return {uniq.begin(), uniq.end()};
}

void check_training_input(const MatrixD& x, std::span<const std::string> labels) {
  if (x.rows() == 0 || x.cols() == 0) throw ValidationError("empty training set");
  if (labels.size() != x.rows()) throw DimensionError("one label per training row required");
  for (double v : x.data())
    if (!std::isfinite(v)) throw ValidationError("training features must be finite");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---- ScoreMatrix -------------------------------------------------------------

void ScoreMatrix::validate() const {
  if (values.rows() != row_ids.size() || values.cols() != classes.size())
    throw DimensionError("score matrix shape does not match its labels");
}

std::size_t ScoreMatrix::class_index(const std::string& name) const {
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (classes[c] == name) return c;
  throw LookupError("score matrix has no class '" + name + "'");
}

void ScoreMatrix::save(const std::filesystem::path& path) const {
  validate();
  std::string out = "video_id";
  for (const auto& c : classes) out += "\t" + c;
  out += "\n";
  for (std::size_t r = 0; r < row_ids.size(); ++r) {
    out += row_ids[r];
    for (double v : values.row(r)) out += "\t" + io::format_double(v);
    out += "\n";
  }
  io::write_text(path, out);
}

ScoreMatrix ScoreMatrix::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  ScoreMatrix s;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty score file");
  {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    while (ls >> tok) s.classes.push_back(tok);
  }
  if (s.classes.empty()) throw FormatError(path.string() + ": score header lists no classes");
  s.values = MatrixD(0, s.classes.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    std::vector<double> row(s.classes.size());
    for (double& v : row)
      if (!(ls >> v)) throw FormatError(path.string() + ": short score row for '" + id + "'");
    s.row_ids.push_back(id);
    s.values.push_row(row);
  }
  return s;
}

// ---- SvmModel ----------------------------------------------------------------

void SvmModel::validate() const {
  const std::size_t C = classes.size();
  if (C == 0) throw ValidationError("model has no classes");
  if (bias.size() != C) throw DimensionError("model needs one bias per class");
  if (kind == SvmKind::linear) {
    if (weights.rows() != C) throw DimensionError("linear model needs one weight vector per class");
  } else {
    if (dual_coef.rows() != C || dual_coef.cols() != support_vectors.rows())
      throw DimensionError("kernel model coefficient shape mismatch");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("kernel gamma must be positive");
  }
}

void SvmModel::save(const std::filesystem::path& path) const {
  validate();
  io::BinaryWriter w;
  w.magic("PSVM");
  w.u32(kModelVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(static_cast<std::uint32_t>(classes.size()));
  for (const auto& c : classes) w.string(c);
  w.u32(static_cast<std::uint32_t>(dim()));
  if (kind == SvmKind::linear) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      w.f32s(weights.row(c));
      w.f32(static_cast<float>(bias[c]));
    }
  } else {
    w.u8(static_cast<std::uint8_t>(form));
    w.f32(static_cast<float>(gamma));
    w.u32(static_cast<std::uint32_t>(support_vectors.rows()));
    w.f32s(std::span<const double>(support_vectors.data()));
    for (std::size_t c = 0; c < classes.size(); ++c) {
      w.f32s(dual_coef.row(c));
      w.f32(static_cast<float>(bias[c]));
    }
  }
  io::write_file(path, w.bytes());
}

SvmModel SvmModel::load(const std::filesystem::path& path) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PSVM");
  if (r.u32() != kModelVersion) throw FormatError(path.string() + ": unsupported PSVM version");
  SvmModel m;
  const auto kind = r.u8();
  if (kind > 1) throw FormatError(path.string() + ": unknown model kind");
  m.kind = static_cast<SvmKind>(kind);
  const std::size_t n_classes = r.u32();
  for (std::size_t c = 0; c < n_classes; ++c) m.classes.push_back(r.string());
  const std::size_t dim = r.u32();
  auto to_double = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  if (m.kind == SvmKind::linear) {
    m.weights = MatrixD(0, dim);
    for (std::size_t c = 0; c < n_classes; ++c) {
      m.weights.push_row(to_double(r.f32s(dim)));
      m.bias.push_back(r.f32());
    }
  } else {
    const auto form = r.u8();
    if (form > 1) throw FormatError(path.string() + ": unknown chi2 kernel form");
    m.form = static_cast<Chi2Form>(form);
    m.gamma = r.f32();
    const std::size_t n_sv = r.u32();
    m.support_vectors = MatrixD(n_sv, dim);
    m.support_vectors.data() = to_double(r.f32s(n_sv * dim));
    m.dual_coef = MatrixD(0, n_sv);
    for (std::size_t c = 0; c < n_classes; ++c) {
      m.dual_coef.push_row(to_double(r.f32s(n_sv)));
      m.bias.push_back(r.f32());
    }
  }
  r.expect_end();
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

// ---- Linear SVM ---------------------------------------------------------------

SvmModel train_linear(const MatrixD& features, std::span<const std::string> labels, const LinearSvmParams& params,
                      std::vector<BinaryTrainReport>* report) {
  check_training_input(features, labels);
  if (!(params.C > 0.0)) throw ValidationError("SVM regularization C must be positive");
  const std::size_t n = features.rows();
  const std::size_t D = features.cols();

  SvmModel model;
  model.kind = SvmKind::linear;
  model.classes = class_list(labels);
  model.weights = MatrixD(model.classes.size(), D);
  model.bias.assign(model.classes.size(), 0.0);

  // Squared norms of the bias-augmented rows.
  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) qii[i] = dot(features.row(i), features.row(i)) + 1.0;

  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == model.classes[c] ? 1.0 : -1.0;
    std::vector<double> alpha(n, 0.0);
    std::vector<double> w(D, 0.0);
    double b = 0.0;
    Rng rng(derive_seed(params.seed, c));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    BinaryTrainReport rep;
    rep.positive_class = model.classes[c];
    for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t i : order) {
        const auto x = features.row(i);
        const double g = y[i] * (dot(w, x) + b) - 1.0;
        double pg = g;
        if (alpha[i] == 0.0) pg = std::min(g, 0.0);
        else if (alpha[i] == params.C) pg = std::max(g, 0.0);
        if (pg == 0.0) continue;
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qii[i], 0.0, params.C);
        const double delta = (alpha[i] - old) * y[i];
        if (delta == 0.0) continue;
        for (std::size_t j = 0; j < D; ++j) w[j] += delta * x[j];
        b += delta;
      }
      ++rep.epochs;

      const double wsq = dot(w, w) + b * b;
      double hinge = 0.0, asum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        hinge += std::max(0.0, 1.0 - y[i] * (dot(w, features.row(i)) + b));
        asum += alpha[i];
      }
      rep.primal = 0.5 * wsq + params.C * hinge;
      rep.dual = asum - 0.5 * wsq;
      if (rep.gap() <= params.gap_tolerance * static_cast<double>(n)) break;
    }
    std::copy(w.begin(), w.end(), model.weights.row(c).begin());
    model.bias[c] = b;
    if (report) report->push_back(rep);
  }
  return model;
}

// ---- chi2 kernel SVM ----------------------------------------------------------

double chi2_distance(std::span<const double> x, std::span<const double> y, double eps) {
  if (x.size() != y.size()) throw DimensionError("chi2 distance needs equal-length vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d / (x[i] + y[i] + eps);
  }
  return s;
}

double chi2_gamma(const MatrixD& features) {
  const std::size_t n = features.rows();
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++pairs) sum += chi2_distance(features.row(i), features.row(j));
  if (pairs == 0 || !(sum > 0.0)) return 1.0;
  return static_cast<double>(pairs) / sum;
}

double chi2_kernel(std::span<const double> x, std::span<const double> y, Chi2Form form, double gamma) {
  if (form == Chi2Form::exponential) return std::exp(-gamma * chi2_distance(x, y));
  if (x.size() != y.size()) throw DimensionError("chi2 kernel needs equal-length vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double den = x[i] + y[i];
    if (den > 0.0) s += 2.0 * x[i] * y[i] / den;
  }
  return s;
}

MatrixD chi2_kernel_matrix(const MatrixD& a, const MatrixD& b, Chi2Form form, double gamma) {
  MatrixD k(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) k(i, j) = chi2_kernel(a.row(i), b.row(j), form, gamma);
  return k;
}

SvmModel train_chi2(const MatrixD& features, std::span<const std::string> labels, const Chi2SvmParams& params) {
  check_training_input(features, labels);
  const std::size_t n = features.rows();
  if (n > params.max_samples)
    throw CapacityError("chi2 SVM kernel matrix limited to " + std::to_string(params.max_samples) +
                        " samples, got " + std::to_string(n));
  if (!(params.C > 0.0)) throw ValidationError("SVM regularization C must be positive");
  for (double v : features.data())
    if (v < 0.0) throw ValidationError("chi2 kernel needs non-negative features");

  SvmModel model;
  model.kind = SvmKind::chi2_kernel;
  model.form = params.form;
  model.classes = class_list(labels);
  model.gamma = params.gamma.value_or(chi2_gamma(features));
  if (!(model.gamma > 0.0)) throw ValidationError("chi2 gamma must be positive");

  // Kernel plus the constant bias feature.
  MatrixD kb = chi2_kernel_matrix(features, features, params.form, model.gamma);
  for (double& v : kb.data()) v += 1.0;

  const std::size_t n_classes = model.classes.size();
  MatrixD coef(n_classes, n, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == model.classes[c] ? 1.0 : -1.0;
    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);  // (Q alpha)_i - 1
    Rng rng(derive_seed(params.seed, c));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
      rng.shuffle(order);
      double pg_max = -std::numeric_limits<double>::infinity();
      double pg_min = std::numeric_limits<double>::infinity();
      for (std::size_t i : order) {
        const double g = grad[i];
        double pg = g;
        if (alpha[i] == 0.0) pg = std::min(g, 0.0);
        else if (alpha[i] == params.C) pg = std::max(g, 0.0);
        pg_max = std::max(pg_max, pg);
        pg_min = std::min(pg_min, pg);
        if (pg == 0.0) continue;
        const double qii = kb(i, i);
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qii, 0.0, params.C);
        const double delta = alpha[i] - old;
        if (delta == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) grad[j] += delta * y[i] * y[j] * kb(i, j);
      }
      if (pg_max - pg_min < params.tolerance) break;
    }
    for (std::size_t i = 0; i < n; ++i) coef(c, i) = alpha[i] * y[i];
  }

  // Keep training points that carry weight for any class.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    bool used = false;
    for (std::size_t c = 0; c < n_classes; ++c) used |= coef(c, i) != 0.0;
    if (used) keep.push_back(i);
  }
  model.support_vectors = MatrixD(0, features.cols());
  for (std::size_t i : keep) model.support_vectors.push_row(features.row(i));
  model.dual_coef = MatrixD(n_classes, keep.size());
  model.bias.assign(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t s = 0; s < keep.size(); ++s) {
      model.dual_coef(c, s) = coef(c, keep[s]);
      model.bias[c] += coef(c, keep[s]);
    }
  }
  return model;
}

// ---- scoring and fusion -------------------------------------------------------

ScoreMatrix score(const SvmModel& model, const MatrixD& features, std::vector<std::string> row_ids) {
  model.validate();
  if (features.rows() > 0 && features.cols() != model.dim())
    throw DimensionError("features have dimension " + std::to_string(features.cols()) + ", model expects " +
                         std::to_string(model.dim()));
  if (row_ids.empty())
    for (std::size_t i = 0; i < features.rows(); ++i) row_ids.push_back(std::to_string(i));
  if (row_ids.size() != features.rows()) throw DimensionError("one row id per feature row required");

  ScoreMatrix out{model.classes, std::move(row_ids), MatrixD(features.rows(), model.classes.size())};
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto x = features.row(i);
    if (model.kind == SvmKind::linear) {
      for (std::size_t c = 0; c < model.classes.size(); ++c) out.values(i, c) = dot(model.weights.row(c), x) + model.bias[c];
    } else {
      std::vector<double> k(model.support_vectors.rows());
      for (std::size_t s = 0; s < k.size(); ++s)
        k[s] = chi2_kernel(model.support_vectors.row(s), x, model.form, model.gamma);
      for (std::size_t c = 0; c < model.classes.size(); ++c) out.values(i, c) = dot(model.dual_coef.row(c), k) + model.bias[c];
    }
  }
  return out;
}

ScoreMatrix late_fuse(std::span<const ScoreMatrix> scores, std::span<const double> weights, bool standardize) {
  if (scores.empty()) throw ValidationError("nothing to fuse");
  if (!weights.empty() && weights.size() != scores.size())
    throw ValidationError("need one fusion weight per score matrix");
  const ScoreMatrix& ref = scores.front();
  for (const auto& s : scores) {
    s.validate();
    if (s.classes != ref.classes || s.row_ids != ref.row_ids)
      throw ValidationError("score matrices to fuse must share classes and rows");
  }
  double wsum = 0.0;
  std::vector<double> w(scores.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  for (double x : w) {
    if (x < 0.0 || !std::isfinite(x)) throw ValidationError("fusion weights must be non-negative");
    wsum += x;
  }
  if (!(wsum > 0.0)) throw ValidationError("fusion weights sum to zero");

  ScoreMatrix out{ref.classes, ref.row_ids, MatrixD(ref.values.rows(), ref.values.cols(), 0.0)};
  for (std::size_t m = 0; m < scores.size(); ++m) {
    const MatrixD& v = scores[m].values;
    for (std::size_t c = 0; c < v.cols(); ++c) {
      double shift = 0.0, scale = 1.0;
      if (standardize && v.rows() > 0) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t r = 0; r < v.rows(); ++r) mean += v(r, c);
        mean /= static_cast<double>(v.rows());
        for (std::size_t r = 0; r < v.rows(); ++r) sq += (v(r, c) - mean) * (v(r, c) - mean);
        const double sd = std::sqrt(sq / static_cast<double>(v.rows()));
        shift = mean;
        scale = sd > 0.0 ? sd : 1.0;
      }
      for (std::size_t r = 0; r < v.rows(); ++r) out.values(r, c) += w[m] * ((v(r, c) - shift) / scale);
    }
  }
  for (double& x : out.values.data()) x /= wsum;
  return out;
}

ScoreMatrix frame_score_aggregate(std::span<const ScoreMatrix> per_video, std::span<const std::string> video_ids,
                                  FrameAggregation mode) {
  if (per_video.size() != video_ids.size()) throw DimensionError("one video id per frame-score matrix required");
  if (per_video.empty()) throw ValidationError("no frame scores to aggregate");
  const auto& classes = per_video.front().classes;
  ScoreMatrix out{classes, {video_ids.begin(), video_ids.end()}, MatrixD(per_video.size(), classes.size())};
  for (std::size_t v = 0; v < per_video.size(); ++v) {
    const auto& s = per_video[v];
    s.validate();
    if (s.classes != classes) throw ValidationError("frame-score matrices disagree on classes");
    if (s.values.rows() == 0) throw ValidationError("video '" + video_ids[v] + "' has no frame scores");
    for (std::size_t c = 0; c < classes.size(); ++c) {
      double acc = mode == FrameAggregation::max ? -std::numeric_limits<double>::infinity() : 0.0;
      for (std::size_t t = 0; t < s.values.rows(); ++t)
        acc = mode == FrameAggregation::max ? std::max(acc, s.values(t, c)) : acc + s.values(t, c);
      out.values(v, c) = mode == FrameAggregation::max ? acc : acc / static_cast<double>(s.values.rows());
    }
  }
  return out;
}

}  // namespace pcnn::learn
