#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnn/learn.hpp"

namespace pcnn::eval {

using learn::ScoreMatrix;

// Argmax with ties to the lowest class index.
std::size_t predicted_class(std::span<const double> row);

// Fraction of rows whose predicted class equals the label.
double accuracy(const ScoreMatrix& scores, std::span<const std::string> labels);

// Ranks by descending score (ties keep input order) and averages precision
// at the rank of every positive. No positives gives 0.
double average_precision(std::span<const double> scores, const std::vector<bool>& positives);

struct MapOptions {
  // A class left out of the mean, such as a background class.
  std::optional<std::string> exclude_class;
};

// Unweighted mean of per-class AP over classes with at least one positive.
double mean_ap(const ScoreMatrix& scores, std::span<const std::string> labels, const MapOptions& options = {});

// 1-based rank of row `row` in column `col`, descending, ties by row order.
std::size_t rank_in_class(const ScoreMatrix& scores, std::size_t row, std::size_t col);

struct RankDiffRow {
  std::string video_id;
  std::string label;
  std::size_t rank_a = 0;
  std::size_t rank_b = 0;
  long delta = 0;  // rank_a - rank_b; positive means scorer b ranks the video higher
};

struct ClassAccuracyRow {
  std::string label;
  std::size_t count = 0;
  double accuracy_a = 0.0;
  double accuracy_b = 0.0;
  double delta = 0.0;  // accuracy_b - accuracy_a
};

struct RankDiffReport {
  std::vector<RankDiffRow> videos;         // sorted by delta, largest first
  std::vector<ClassAccuracyRow> classes;  // in score-matrix class order

  std::string videos_table() const;
  std::string classes_table() const;
};

RankDiffReport rank_diff_report(const ScoreMatrix& a, const ScoreMatrix& b, std::span<const std::string> labels);

double cross_split_mean(std::span<const double> per_split);

}  // namespace pcnn::eval
