#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pcnn {

enum class KMeansInit {
  // Exact minimum-SSE partition of the sorted values (dynamic programming).
  optimal,
  // k-means++ seeding from the given seed.
  plus_plus,
};

struct KMeans1dResult {
  std::vector<double> centers;            // ascending, exactly k entries
  double objective = 0.0;                 // sum of squared distances to nearest center
  std::vector<double> objective_history;  // after initialization, then after every Lloyd step
  int iterations = 0;
};

// Scalar k-means: initialization followed by Lloyd iterations until the
// assignment stops changing or max_iter is hit. With fewer than k distinct
// values the centers are those values, padded with the maximum.
KMeans1dResult kmeans_1d(std::span<const double> values, int k, std::uint64_t seed,
                         KMeansInit init = KMeansInit::optimal, int max_iter = 100);

// Index of the nearest center; ties go to the lower index.
std::size_t nearest_center(std::span<const double> centers, double value);

double kmeans_objective(std::span<const double> values, std::span<const double> centers);

}  // namespace pcnn
