#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pcnn/matrix.hpp"
#include "pcnn/pose.hpp"

// Fisher-vector encoding of local descriptor sets: PCA, diagonal GMM, FV
// statistics, power + L2 normalization and spatial pyramids.
namespace pcnn::fv {

struct PcaModel {
  std::vector<double> mean;         // d
  MatrixD basis;                    // d_out x d, orthonormal rows
  std::vector<double> eigenvalues;  // d_out, descending

  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return basis.rows(); }

  // "PPCA": magic, version u32, d u32, d_out u32, mean, basis rows, eigenvalues (float32 LE).
  void save(const std::filesystem::path& path) const;
  static PcaModel load(const std::filesystem::path& path);
};

// Top eigenvectors of the sample covariance; each basis row is signed so its
// largest-magnitude entry is positive. output_dim 0 means d/2 (at least 1).
PcaModel pca_fit(const MatrixD& data, std::size_t output_dim = 0);
std::vector<double> pca_apply(const PcaModel& model, std::span<const double> x);
MatrixD pca_apply(const PcaModel& model, const MatrixD& data);

struct GmmModel {
  std::vector<double> weights;  // K, positive, sum to 1
  MatrixD means;                // K x d
  MatrixD variances;            // K x d, diagonal covariances

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }
  void validate() const;

  // Per-sample log densities log w_k + log N(x | mu_k, var_k).
  std::vector<double> component_log_densities(std::span<const double> x) const;
  // Mean per-sample log-likelihood of the rows of data.
  double average_log_likelihood(const MatrixD& data) const;

  // "PGMM": magic, version u32, K u32, d u32, weights, means, variances (float32 LE).
  void save(const std::filesystem::path& path) const;
  static GmmModel load(const std::filesystem::path& path);
};

struct GmmFitOptions {
  int max_iterations = 100;
  // Stop once the mean per-sample log-likelihood gains less than this.
  double tolerance = 1e-6;
  // Variance floor as a fraction of each dimension's data variance.
  double variance_floor_ratio = 1e-4;
};

struct GmmFitResult {
  GmmModel model;
  // Mean per-sample log-likelihood before the first M-step and after each one.
  std::vector<double> log_likelihood_history;
  int iterations = 0;
  std::vector<double> variance_floor;  // per dimension
};

// k-means initialization (k-means++ from seed, then Lloyd) followed by EM with
// diagonal covariances.
GmmFitResult gmm_fit(const MatrixD& data, int components, std::uint64_t seed, const GmmFitOptions& options = {});

struct LocalDescriptorSet {
  MatrixD descriptors;           // N x d
  std::vector<Point2> positions;  // N, normalized to [0, 1]^2

  std::size_t size() const { return descriptors.rows(); }
  void validate() const;
};

// Per component k: first-order block G_k then second-order block H_k,
//   G_k = 1/(N sqrt(w_k))  sum_n g_nk (x_n - mu_k) / sigma_k
//   H_k = 1/(N sqrt(2 w_k)) sum_n g_nk [((x_n - mu_k) / sigma_k)^2 - 1]
// with posteriors g_nk. Length 2*K*d; an empty set encodes to zeros.
std::vector<double> fisher_encode(const MatrixD& descriptors, const GmmModel& gmm);
std::vector<double> fisher_encode(const LocalDescriptorSet& set, const GmmModel& gmm);

// Signed square root, then L2 normalization (zero vectors pass through).
std::vector<double> normalize_fv(std::vector<double> v);

struct GridLevel {
  int cols = 1;
  int rows = 1;
};

// Whole frame plus three horizontal bands.
std::vector<GridLevel> default_pyramid();

// Normalized FV per cell, levels in order, cells row-major within a level.
std::vector<double> pyramid_encode(const LocalDescriptorSet& set, const GmmModel& gmm,
                                   std::span<const GridLevel> grid);

// "PLDS": magic, version u32, dim u32, count u32, then count records of
// (x f32, y f32, dim f32) little-endian.
void write_local_descriptors(const std::filesystem::path& path, const LocalDescriptorSet& set);
LocalDescriptorSet read_local_descriptors(const std::filesystem::path& path);

}  // namespace pcnn::fv
