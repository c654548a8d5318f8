#include "pcnn/kmeans1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcnn/errors.hpp"
#include "pcnn/rng.hpp"

namespace pcnn {

std::size_t nearest_center(std::span<const double> centers, double value) {
  std::size_t best = 0;
  double best_d = std::abs(value - centers[0]);
  for (std::size_t c = 1; c < centers.size(); ++c) {
    const double d = std::abs(value - centers[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double kmeans_objective(std::span<const double> values, std::span<const double> centers) {
  double sse = 0.0;
  for (double v : values) {
    const double d = v - centers[nearest_center(centers, v)];
    sse += d * d;
  }
  return sse;
}

namespace {

// Minimum-SSE segmentation of sorted values into k contiguous groups.
// Divide and conquer over the monotone split points, O(k n log n).
std::vector<double> optimal_centers(const std::vector<double>& sorted, int k) {
  const std::size_t n = sorted.size();
  double shift = 0.0;
  for (double v : sorted) shift += v;
  shift /= static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sorted[i] - shift;
    s1[i + 1] = s1[i] + v;
    s2[i + 1] = s2[i] + v * v;
  }
  auto cost = [&](std::size_t j, std::size_t i) {  // values j..i inclusive
    const double len = static_cast<double>(i - j + 1);
    const double a = s1[i + 1] - s1[j];
    return std::max(0.0, (s2[i + 1] - s2[j]) - a * a / len);
  };

  const auto K = static_cast<std::size_t>(k);
  std::vector<std::vector<double>> best(K, std::vector<double>(n, std::numeric_limits<double>::infinity()));
  std::vector<std::vector<std::size_t>> split(K, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) best[0][i] = cost(0, i);

  for (std::size_t m = 1; m < K; ++m) {
    auto& row = best[m];
    auto& prev = best[m - 1];
    auto& arg = split[m];
    // Fill row[i] for i in [lo, hi] with optimal split in [jlo, jhi].
    auto solve = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t jlo, std::size_t jhi) -> void {
      if (lo > hi) return;
      const std::size_t mid = lo + (hi - lo) / 2;
      const std::size_t start = std::max(jlo, m);
      const std::size_t stop = std::min(jhi, mid);
      double bv = std::numeric_limits<double>::infinity();
      std::size_t bj = start;
      for (std::size_t j = start; j <= stop; ++j) {
        const double v = prev[j - 1] + cost(j, mid);
        if (v < bv) {
          bv = v;
          bj = j;
        }
      }
      row[mid] = bv;
      arg[mid] = bj;
      if (mid > lo) self(self, lo, mid - 1, jlo, bj);
      self(self, mid + 1, hi, bj, jhi);
    };
    solve(solve, m, n - 1, m, n - 1);
  }

  std::vector<double> centers(K);
  std::size_t end = n - 1;
  for (std::size_t m = K; m-- > 0;) {
    const std::size_t start = m == 0 ? 0 : split[m][end];
    double sum = 0.0;
    for (std::size_t i = start; i <= end; ++i) sum += sorted[i];
    centers[m] = sum / static_cast<double>(end - start + 1);
    if (m > 0) end = start - 1;
  }
  return centers;
}

std::vector<double> plus_plus_centers(std::span<const double> values, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> centers{values[rng.below(values.size())]};
  std::vector<double> d2(values.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - centers[nearest_center(centers, values[i])];
      d2[i] = d * d;
      total += d2[i];
    }
    std::size_t pick = values.size() - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < values.size(); ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(values.size());
    }
    centers.push_back(values[pick]);
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

}  // namespace

KMeans1dResult kmeans_1d(std::span<const double> values, int k, std::uint64_t seed, KMeansInit init, int max_iter) {
  if (k < 1) throw ValidationError("k-means needs k >= 1");
  if (values.empty()) throw ValidationError("k-means needs at least one value");
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("k-means input has non-finite values");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  KMeans1dResult res;
  if (distinct.size() <= static_cast<std::size_t>(k)) {
    res.centers = distinct;
    res.centers.resize(static_cast<std::size_t>(k), distinct.back());
    res.objective = 0.0;
    res.objective_history = {0.0};
    return res;
  }

  std::vector<double> centers =
      init == KMeansInit::optimal ? optimal_centers(sorted, k) : plus_plus_centers(values, k, seed);

  std::vector<std::size_t> assign(values.size(), static_cast<std::size_t>(-1));
  res.objective_history.push_back(kmeans_objective(values, centers));
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    std::vector<double> sum(centers.size(), 0.0);
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::size_t c = nearest_center(centers, values[i]);
      if (c != assign[i]) changed = true;
      assign[i] = c;
      sum[c] += values[i];
      ++count[c];
    }
    if (!changed) break;
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (count[c] > 0) centers[c] = sum[c] / static_cast<double>(count[c]);
    std::sort(centers.begin(), centers.end());
    ++res.iterations;
    res.objective_history.push_back(kmeans_objective(values, centers));
  }
  res.centers = std::move(centers);
  res.objective = kmeans_objective(values, res.centers);
  return res;
}

}  // namespace pcnn
