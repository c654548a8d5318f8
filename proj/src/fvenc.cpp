#include "pcnn/fvenc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"
#include "pcnn/rng.hpp"

namespace pcnn::fv {

namespace {
constexpr std::uint32_t kModelVersion = 1;

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest_row(const MatrixD& centers, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(centers.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// k-means++ seeding followed by Lloyd iterations; returns the centers.
MatrixD kmeans(const MatrixD& data, std::size_t k, std::uint64_t seed, int max_iter) {
  Rng rng(seed);
  const std::size_t n = data.rows();
  MatrixD centers(0, data.cols());
  centers.push_row(data.row(rng.below(n)));
  std::vector<double> d2(n);
  while (centers.rows() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = squared_distance(data.row(i), centers.row(nearest_row(centers, data.row(i))));
      total += d2[i];
    }
    std::size_t pick = rng.below(n);
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_row(data.row(pick));
  }

  std::vector<std::size_t> assign(n, k);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    MatrixD sums(k, data.cols(), 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_row(centers, data.row(i));
      changed |= c != assign[i];
      assign[i] = c;
      ++counts[c];
      auto s = sums.row(c);
      const auto x = data.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) s[j] += x[j];
    }
    if (!changed) break;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = centers.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

}  // namespace

// ---- PCA -------------------------------------------------------------------

PcaModel pca_fit(const MatrixD& data, std::size_t output_dim) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  if (n < 2) throw ValidationError("PCA needs at least two samples");
  if (d == 0) throw DimensionError("PCA input has zero dimensions");
  if (output_dim == 0) output_dim = std::max<std::size_t>(1, d / 2);
  if (output_dim > d) throw DimensionError("PCA output dimension exceeds input dimension");

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += data(i, j);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered(i, j) = data(i, j) - model.mean[j];
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw ValidationError("PCA eigendecomposition failed");

  model.basis = MatrixD(output_dim, d);
  for (std::size_t r = 0; r < output_dim; ++r) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - r);  // ascending order from Eigen
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0) v = -v;
    for (std::size_t j = 0; j < d; ++j) model.basis(r, j) = v(static_cast<Eigen::Index>(j));
    model.eigenvalues.push_back(std::max(0.0, solver.eigenvalues()(col)));
  }
  return model;
}

std::vector<double> pca_apply(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) throw DimensionError("PCA input has the wrong dimension");
  std::vector<double> out(model.output_dim(), 0.0);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto b = model.basis.row(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += b[j] * (x[j] - model.mean[j]);
    out[r] = acc;
  }
  return out;
}

MatrixD pca_apply(const PcaModel& model, const MatrixD& data) {
  MatrixD out(0, model.output_dim());
  for (std::size_t i = 0; i < data.rows(); ++i) out.push_row(pca_apply(model, data.row(i)));
  return out;
}

void PcaModel::save(const std::filesystem::path& path) const {
  io::BinaryWriter w;
  w.magic("PPCA");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(input_dim()));
  w.u32(static_cast<std::uint32_t>(output_dim()));
  w.f32s(std::span<const double>(mean));
  w.f32s(std::span<const double>(basis.data()));
  w.f32s(std::span<const double>(eigenvalues));
  io::write_file(path, w.bytes());
}

PcaModel PcaModel::load(const std::filesystem::path& path) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PPCA");
  if (r.u32() != kModelVersion) throw FormatError(path.string() + ": unsupported PPCA version");
  const std::size_t d = r.u32();
  const std::size_t d_out = r.u32();
  if (d == 0 || d_out == 0 || d_out > d) throw FormatError(path.string() + ": invalid PCA dimensions");
  PcaModel m;
  auto to_double = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  m.mean = to_double(r.f32s(d));
  m.basis = MatrixD(d_out, d);
  m.basis.data() = to_double(r.f32s(d * d_out));
  m.eigenvalues = to_double(r.f32s(d_out));
  r.expect_end();
  return m;
}

// ---- GMM -------------------------------------------------------------------

void GmmModel::validate() const {
  const std::size_t K = weights.size();
  if (K == 0) throw ValidationError("GMM has no components");
  if (means.rows() != K || variances.rows() != K || variances.cols() != means.cols() || means.cols() == 0)
    throw DimensionError("GMM parameter shapes disagree");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ValidationError("GMM weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("GMM weights must sum to 1");
  for (double v : variances.data())
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("GMM variances must be positive");
}

std::vector<double> GmmModel::component_log_densities(std::span<const double> x) const {
  if (x.size() != dim()) throw DimensionError("descriptor dimension does not match the GMM");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> out(components());
  for (std::size_t k = 0; k < components(); ++k) {
    const auto mu = means.row(k);
    const auto var = variances.row(k);
    double acc = std::log(weights[k]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - mu[j];
      acc -= 0.5 * (log_2pi + std::log(var[j]) + d * d / var[j]);
    }
    out[k] = acc;
  }
  return out;
}

double GmmModel::average_log_likelihood(const MatrixD& data) const {
  if (data.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) total += log_sum_exp(component_log_densities(data.row(i)));
  return total / static_cast<double>(data.rows());
}

void GmmModel::save(const std::filesystem::path& path) const {
  validate();
  io::BinaryWriter w;
  w.magic("PGMM");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(components()));
  w.u32(static_cast<std::uint32_t>(dim()));
  w.f32s(std::span<const double>(weights));
  w.f32s(std::span<const double>(means.data()));
  w.f32s(std::span<const double>(variances.data()));
  io::write_file(path, w.bytes());
}

GmmModel GmmModel::load(const std::filesystem::path& path) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PGMM");
  if (r.u32() != kModelVersion) throw FormatError(path.string() + ": unsupported PGMM version");
  const std::size_t K = r.u32();
  const std::size_t d = r.u32();
  if (K == 0 || d == 0) throw FormatError(path.string() + ": invalid GMM dimensions");
  GmmModel g;
  const auto w = r.f32s(K);
  g.weights.assign(w.begin(), w.end());
  double sum = 0.0;
  for (double x : g.weights) sum += x;
  for (double& x : g.weights) x /= sum;  // float32 storage loses the exact normalization
  const auto m = r.f32s(K * d);
  const auto v = r.f32s(K * d);
  g.means = MatrixD(K, d);
  g.means.data().assign(m.begin(), m.end());
  g.variances = MatrixD(K, d);
  g.variances.data().assign(v.begin(), v.end());
  r.expect_end();
  try {
    g.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return g;
}

namespace {

// E-step: fills responsibilities (N x K) and returns the mean log-likelihood.
double expectation(const GmmModel& g, const MatrixD& data, MatrixD& resp) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto lp = g.component_log_densities(data.row(i));
    const double lse = log_sum_exp(lp);
    total += lse;
    auto r = resp.row(i);
    for (std::size_t k = 0; k < lp.size(); ++k) r[k] = std::exp(lp[k] - lse);
  }
  return total / static_cast<double>(data.rows());
}

void maximization(GmmModel& g, const MatrixD& data, const MatrixD& resp, const std::vector<double>& floor) {
  const std::size_t K = g.components();
  const std::size_t d = g.dim();
  const double n = static_cast<double>(data.rows());
  for (std::size_t k = 0; k < K; ++k) {
    double nk = 0.0;
    std::vector<double> s1(d, 0.0), s2(d, 0.0);
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double r = resp(i, k);
      if (r == 0.0) continue;
      nk += r;
      const auto x = data.row(i);
      for (std::size_t j = 0; j < d; ++j) s1[j] += r * x[j];
    }
    // A component with no mass keeps its parameters and a negligible weight.
    if (nk < 1e-12 * n) {
      g.weights[k] = 1e-12;
      continue;
    }
    auto mu = g.means.row(k);
    for (std::size_t j = 0; j < d; ++j) mu[j] = s1[j] / nk;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double r = resp(i, k);
      if (r == 0.0) continue;
      const auto x = data.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - mu[j];
        s2[j] += r * diff * diff;
      }
    }
    auto var = g.variances.row(k);
    for (std::size_t j = 0; j < d; ++j) var[j] = std::max(s2[j] / nk, floor[j]);
    g.weights[k] = nk / n;
  }
  double sum = 0.0;
  for (double w : g.weights) sum += w;
  for (double& w : g.weights) w /= sum;
}

}  // namespace

GmmFitResult gmm_fit(const MatrixD& data, int components, std::uint64_t seed, const GmmFitOptions& options) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  if (components < 1) throw ValidationError("GMM needs at least one component");
  const auto K = static_cast<std::size_t>(components);
  if (n < K) throw ValidationError("GMM needs at least as many samples as components");
  if (d == 0) throw DimensionError("GMM input has zero dimensions");

  GmmFitResult res;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data(i, j);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (data(i, j) - mean[j]) * (data(i, j) - mean[j]);
  res.variance_floor.resize(d);
  for (std::size_t j = 0; j < d; ++j)
    res.variance_floor[j] = std::max(options.variance_floor_ratio * var[j] / static_cast<double>(n), 1e-12);

  // Initialize from hard k-means assignments.
  const MatrixD centers = kmeans(data, K, seed, 100);
  GmmModel& g = res.model;
  g.means = centers;
  g.variances = MatrixD(K, d, 0.0);
  g.weights.assign(K, 0.0);
  std::vector<double> counts(K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = nearest_row(centers, data.row(i));
    counts[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = data(i, j) - centers(c, j);
      g.variances(c, j) += diff * diff;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = counts[k] > 0 ? g.variances(k, j) / counts[k] : var[j] / static_cast<double>(n);
      g.variances(k, j) = std::max(v, res.variance_floor[j]);
    }
    g.weights[k] = std::max(counts[k], 1e-12) / static_cast<double>(n);
  }
  double wsum = 0.0;
  for (double w : g.weights) wsum += w;
  for (double& w : g.weights) w /= wsum;

  MatrixD resp(n, K);
  double ll = expectation(g, data, resp);
  res.log_likelihood_history.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    maximization(g, data, resp, res.variance_floor);
    const double next = expectation(g, data, resp);
    res.log_likelihood_history.push_back(next);
    ++res.iterations;
    if (next - ll < options.tolerance) break;
    ll = next;
  }
  g.validate();
  return res;
}

// ---- Fisher vectors ----------------------------------------------------------

void LocalDescriptorSet::validate() const {
  if (positions.size() != descriptors.rows()) throw DimensionError("one position per local descriptor required");
  for (const auto& p : positions)
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
      throw ValidationError("local descriptor positions must lie in [0, 1]^2");
  for (double v : descriptors.data())
    if (!std::isfinite(v)) throw ValidationError("local descriptors must be finite");
}

std::vector<double> fisher_encode(const MatrixD& descriptors, const GmmModel& gmm) {
  gmm.validate();
  const std::size_t K = gmm.components();
  const std::size_t d = gmm.dim();
  std::vector<double> out(2 * K * d, 0.0);
  const std::size_t n = descriptors.rows();
  if (n == 0) return out;
  if (descriptors.cols() != d) throw DimensionError("descriptor dimension does not match the GMM");

  std::vector<double> sigma(K * d);
  for (std::size_t i = 0; i < K * d; ++i) sigma[i] = std::sqrt(gmm.variances.data()[i]);

  for (std::size_t i = 0; i < n; ++i) {
    const auto x = descriptors.row(i);
    const auto lp = gmm.component_log_densities(x);
    const double lse = log_sum_exp(lp);
    for (std::size_t k = 0; k < K; ++k) {
      const double g = std::exp(lp[k] - lse);
      if (g == 0.0) continue;
      double* first = &out[2 * k * d];
      double* second = first + d;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = (x[j] - gmm.means(k, j)) / sigma[k * d + j];
        first[j] += g * z;
        second[j] += g * (z * z - 1.0);
      }
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    const double a = 1.0 / (static_cast<double>(n) * std::sqrt(gmm.weights[k]));
    const double b = 1.0 / (static_cast<double>(n) * std::sqrt(2.0 * gmm.weights[k]));
    for (std::size_t j = 0; j < d; ++j) {
      out[2 * k * d + j] *= a;
      out[2 * k * d + d + j] *= b;
    }
  }
  return out;
}

std::vector<double> fisher_encode(const LocalDescriptorSet& set, const GmmModel& gmm) {
  set.validate();
  return fisher_encode(set.descriptors, gmm);
}

std::vector<double> normalize_fv(std::vector<double> v) {
  double sq = 0.0;
  for (double& x : v) {
    x = std::copysign(std::sqrt(std::abs(x)), x);
    sq += x * x;
  }
  if (sq > 0.0) {
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<GridLevel> default_pyramid() { return {{1, 1}, {1, 3}}; }

std::vector<double> pyramid_encode(const LocalDescriptorSet& set, const GmmModel& gmm,
                                   std::span<const GridLevel> grid) {
  set.validate();
  if (grid.empty()) throw ValidationError("spatial pyramid needs at least one level");
  std::vector<double> out;
  for (const auto& level : grid) {
    if (level.cols < 1 || level.rows < 1) throw ValidationError("pyramid grid cells must be at least 1x1");
    std::vector<MatrixD> cells(static_cast<std::size_t>(level.cols * level.rows), MatrixD(0, set.descriptors.cols()));
    for (std::size_t i = 0; i < set.size(); ++i) {
      const int c = std::min(static_cast<int>(set.positions[i].x * level.cols), level.cols - 1);
      const int r = std::min(static_cast<int>(set.positions[i].y * level.rows), level.rows - 1);
      cells[static_cast<std::size_t>(r * level.cols + c)].push_row(set.descriptors.row(i));
    }
    for (const auto& cell : cells) {
      const auto enc = normalize_fv(fisher_encode(cell, gmm));
      out.insert(out.end(), enc.begin(), enc.end());
    }
  }
  return out;
}

void write_local_descriptors(const std::filesystem::path& path, const LocalDescriptorSet& set) {
  set.validate();
  io::BinaryWriter w;
  w.magic("PLDS");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(set.descriptors.cols()));
  w.u32(static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.f32(static_cast<float>(set.positions[i].x));
    w.f32(static_cast<float>(set.positions[i].y));
    w.f32s(set.descriptors.row(i));
  }
  io::write_file(path, w.bytes());
}

LocalDescriptorSet read_local_descriptors(const std::filesystem::path& path) {
  io::BinaryReader r(io::read_file(path), path.string());
  r.expect_magic("PLDS");
  if (r.u32() != kModelVersion) throw FormatError(path.string() + ": unsupported PLDS version");
  const std::size_t d = r.u32();
  const std::size_t n = r.u32();
  if (d == 0) throw FormatError(path.string() + ": zero descriptor dimension");
  LocalDescriptorSet set;
  set.descriptors = MatrixD(n, d);
  set.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    set.positions[i].x = r.f32();
    set.positions[i].y = r.f32();
    const auto v = r.f32s(d);
    std::copy(v.begin(), v.end(), set.descriptors.row(i).begin());
  }
  r.expect_end();
  set.validate();
  return set;
}

}  // namespace pcnn::fv
