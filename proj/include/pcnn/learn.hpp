#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnn/matrix.hpp"

// One-vs-rest SVM training, scoring and score fusion.
namespace pcnn::learn {

// Raw classifier outputs: one row per video, one column per class.
struct ScoreMatrix {
  std::vector<std::string> classes;
  std::vector<std::string> row_ids;
  MatrixD values;

  void validate() const;
  std::size_t class_index(const std::string& name) const;

  // Text: header "video_id<TAB>class...", then "id<TAB>score..." rows.
  void save(const std::filesystem::path& path) const;
  static ScoreMatrix load(const std::filesystem::path& path);
};

enum class SvmKind : std::uint8_t { linear = 0, chi2_kernel = 1 };

// exponential: exp(-gamma * chi2(x, y)); additive: sum 2 x_i y_i / (x_i + y_i).
enum class Chi2Form : std::uint8_t { exponential = 0, additive = 1 };

struct SvmModel {
  SvmKind kind = SvmKind::linear;
  std::vector<std::string> classes;
  std::vector<double> bias;  // per class

  // linear: classes x D
  MatrixD weights;

  // chi2_kernel: decision_c(x) = sum_s dual_coef(c, s) * k(sv_s, x) + bias_c
  Chi2Form form = Chi2Form::exponential;
  double gamma = 1.0;
  MatrixD support_vectors;  // S x D
  MatrixD dual_coef;        // classes x S

  std::size_t dim() const { return kind == SvmKind::linear ? weights.cols() : support_vectors.cols(); }
  void validate() const;

  // "PSVM": magic, version u32, kind u8, class count u32, class names
  // (u32-length-prefixed), dim u32, then for linear: per class D weights and
  // a bias; for chi2_kernel: form u8, gamma, S u32, S x D support vectors,
  // per class S coefficients and a bias. Parameters are float32 LE.
  void save(const std::filesystem::path& path) const;
  static SvmModel load(const std::filesystem::path& path);
};

struct LinearSvmParams {
  double C = 1.0;
  // Stop once the duality gap drops below gap_tolerance * N.
  double gap_tolerance = 1e-4;
  int max_epochs = 1000;
  std::uint64_t seed = 0;
};

struct BinaryTrainReport {
  std::string positive_class;
  int epochs = 0;
  double primal = 0.0;
  double dual = 0.0;
  double gap() const { return primal - dual; }
};

// L2-regularized hinge loss with an (also regularized) bias feature of 1,
// solved per class by dual coordinate descent with seeded shuffling.
SvmModel train_linear(const MatrixD& features, std::span<const std::string> labels, const LinearSvmParams& params = {},
                      std::vector<BinaryTrainReport>* report = nullptr);

// sum_i (x_i - y_i)^2 / (x_i + y_i + eps)
double chi2_distance(std::span<const double> x, std::span<const double> y, double eps = 1e-10);

// 1 / mean chi2 distance over distinct training pairs; 1 when that mean is 0.
double chi2_gamma(const MatrixD& features);

double chi2_kernel(std::span<const double> x, std::span<const double> y, Chi2Form form, double gamma);
MatrixD chi2_kernel_matrix(const MatrixD& a, const MatrixD& b, Chi2Form form, double gamma);

struct Chi2SvmParams {
  double C = 1.0;
  Chi2Form form = Chi2Form::exponential;
  std::optional<double> gamma;  // defaults to chi2_gamma(features)
  std::size_t max_samples = 5000;
  // Stop once the projected-gradient spread falls below this.
  double tolerance = 1e-4;
  int max_epochs = 1000;
  std::uint64_t seed = 0;
};

// Kernel SVM on the precomputed chi2 kernel matrix; the bias is absorbed as
// a constant 1 added to the kernel, solved by dual coordinate descent.
SvmModel train_chi2(const MatrixD& features, std::span<const std::string> labels, const Chi2SvmParams& params = {});

// Raw decision values, no calibration.
ScoreMatrix score(const SvmModel& model, const MatrixD& features, std::vector<std::string> row_ids = {});

// Weighted mean per cell (equal weights by default). With standardize, each
// matrix is first shifted/scaled to zero mean and unit variance per class.
ScoreMatrix late_fuse(std::span<const ScoreMatrix> scores, std::span<const double> weights = {},
                      bool standardize = false);

enum class FrameAggregation { max, mean };

// per_video[i] holds frame-level scores (frames x classes) of video i.
ScoreMatrix frame_score_aggregate(std::span<const ScoreMatrix> per_video, std::span<const std::string> video_ids,
                                  FrameAggregation mode = FrameAggregation::max);

}  // namespace pcnn::learn
