#include "pcnn/eval.hpp"

#include <algorithm>
#include <numeric>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn::eval {

namespace {

void check_labels(const ScoreMatrix& scores, std::span<const std::string> labels) {
  scores.validate();
  if (labels.size() != scores.values.rows()) throw DimensionError("one label per scored video required");
}

}  // namespace

std::size_t predicted_class(std::span<const double> row) {
  if (row.empty()) throw ValidationError("empty score row");
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

double accuracy(const ScoreMatrix& scores, std::span<const std::string> labels) {
  check_labels(scores, labels);
  if (labels.empty()) throw ValidationError("accuracy of an empty set is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (predicted_class(scores.values.row(i)) == scores.class_index(labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double average_precision(std::span<const double> scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) throw DimensionError("one relevance flag per score required");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positives[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double mean_ap(const ScoreMatrix& scores, std::span<const std::string> labels, const MapOptions& options) {
  check_labels(scores, labels);
  for (const auto& l : labels) scores.class_index(l);
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> column(labels.size());
  std::vector<bool> pos(labels.size());
  for (std::size_t c = 0; c < scores.classes.size(); ++c) {
    if (options.exclude_class && *options.exclude_class == scores.classes[c]) continue;
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      column[i] = scores.values(i, c);
      pos[i] = labels[i] == scores.classes[c];
      any |= pos[i];
    }
    if (!any) continue;
    sum += average_precision(column, pos);
    ++used;
  }
  if (used == 0) throw ValidationError("no class has positive examples");
  return sum / static_cast<double>(used);
}

std::size_t rank_in_class(const ScoreMatrix& scores, std::size_t row, std::size_t col) {
  const double s = scores.values(row, col);
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.values.rows(); ++j) {
    const double o = scores.values(j, col);
    if (o > s || (o == s && j < row)) ++rank;
  }
  return rank;
}

RankDiffReport rank_diff_report(const ScoreMatrix& a, const ScoreMatrix& b, std::span<const std::string> labels) {
  check_labels(a, labels);
  check_labels(b, labels);
  if (a.classes != b.classes || a.row_ids != b.row_ids)
    throw ValidationError("compared score matrices must share classes and rows");

  RankDiffReport rep;
  std::vector<std::size_t> count(a.classes.size(), 0), hit_a(a.classes.size(), 0), hit_b(a.classes.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = a.class_index(labels[i]);
    RankDiffRow row{a.row_ids[i], labels[i], rank_in_class(a, i, c), rank_in_class(b, i, c), 0};
    row.delta = static_cast<long>(row.rank_a) - static_cast<long>(row.rank_b);
    rep.videos.push_back(row);
    ++count[c];
    hit_a[c] += predicted_class(a.values.row(i)) == c;
    hit_b[c] += predicted_class(b.values.row(i)) == c;
  }
  std::stable_sort(rep.videos.begin(), rep.videos.end(),
                   [](const RankDiffRow& x, const RankDiffRow& y) { return x.delta > y.delta; });
  for (std::size_t c = 0; c < a.classes.size(); ++c) {
    ClassAccuracyRow row{a.classes[c], count[c], 0.0, 0.0, 0.0};
    if (count[c] > 0) {
      row.accuracy_a = static_cast<double>(hit_a[c]) / static_cast<double>(count[c]);
      row.accuracy_b = static_cast<double>(hit_b[c]) / static_cast<double>(count[c]);
    }
    row.delta = row.accuracy_b - row.accuracy_a;
    rep.classes.push_back(row);
  }
  return rep;
}

std::string RankDiffReport::videos_table() const {
  std::string out = "video_id\tlabel\trank_a\trank_b\tdelta\n";
  for (const auto& r : videos)
    out += r.video_id + "\t" + r.label + "\t" + std::to_string(r.rank_a) + "\t" + std::to_string(r.rank_b) + "\t" +
           std::to_string(r.delta) + "\n";
  return out;
}

std::string RankDiffReport::classes_table() const {
  std::string out = "class\tcount\taccuracy_a\taccuracy_b\tdelta\n";
  for (const auto& r : classes)
    out += r.label + "\t" + std::to_string(r.count) + "\t" + io::format_double(r.accuracy_a) + "\t" +
           io::format_double(r.accuracy_b) + "\t" + io::format_double(r.delta) + "\n";
  return out;
}

double cross_split_mean(std::span<const double> per_split) {
  if (per_split.empty()) throw ValidationError("no split results to average");
  double s = 0.0;
  for (double v : per_split) s += v;
  return s / static_cast<double>(per_split.size());
}

}  // namespace pcnn::eval
