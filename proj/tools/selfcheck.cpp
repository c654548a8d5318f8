#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>

#include "pcnn/aggregate.hpp"
#include "pcnn/eval.hpp"
#include "pcnn/flowprep.hpp"
#include "pcnn/hlpf.hpp"
#include "pcnn/kmeans1d.hpp"
#include "pcnn/poselink.hpp"
#include "pcnn/rng.hpp"

namespace pcnn::cli {

namespace {

DescriptorSeries random_series(Rng& rng, std::size_t T, std::size_t k) {
  DescriptorSeries s;
  s.vectors = MatrixF(T, k);
  for (auto& v : s.vectors.data()) v = static_cast<float>(rng.uniform(-5, 5));
  return s;
}

bool check_quantization() {
  const FlowQuantParams q;
  for (int ix = -80; ix <= 80; ++ix) {
    const double v = ix / 4.0;
    const double x = q.a * v + q.b;
    const double r = x >= 0 ? std::floor(x + 0.5) : -std::floor(-x + 0.5);
    if (quantize_value(v, q) != static_cast<int>(std::clamp(r, 0.0, 255.0))) return false;
  }
  return true;
}

bool check_aggregation(Rng& rng) {
  const std::size_t T = 1 + rng.below(12), k = 1 + rng.below(6);
  const auto s = random_series(rng, T, k);
  auto shuffled = s;
  std::vector<std::size_t> order(T);
  for (std::size_t i = 0; i < T; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < T; ++i)
    std::copy(s.vectors.row(order[i]).begin(), s.vectors.row(order[i]).end(), shuffled.vectors.row(i).begin());
  if (static_descriptor(s) != static_descriptor(shuffled)) return false;
  const auto mm = min_max(s);
  for (std::size_t j = 0; j < k; ++j)
    if (mm.min[j] > mm.max[j]) return false;
  auto constant = s;
  for (std::size_t t = 0; t < T; ++t)
    std::copy(s.vectors.row(0).begin(), s.vectors.row(0).end(), constant.vectors.row(t).begin());
  for (float v : dynamic_descriptor(constant, 1 + static_cast<int>(rng.below(6))))
    if (v != 0.0f) return false;
  return true;
}

bool check_linker(Rng& rng) {
  const std::size_t T = 1 + rng.below(4), C = 1 + rng.below(3), J = 2 + rng.below(2);
  link::CandidateSet cands(T);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < J; ++j) names.push_back("j" + std::to_string(j));
  for (auto& frame : cands) {
    const std::size_t n = 1 + rng.below(C);
    for (std::size_t c = 0; c < n; ++c) {
      link::Candidate cand;
      cand.pose.joint_names = names;
      for (std::size_t j = 0; j < J; ++j) cand.pose.joints.push_back({rng.uniform(0, 8), rng.uniform(0, 8)});
      cand.score = rng.uniform(-1, 1);
      frame.push_back(cand);
    }
  }
  std::vector<FlowField> flows;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    FlowField f(8, 8);
    for (auto& v : f.vx) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : f.vy) v = static_cast<float>(rng.uniform(-1, 1));
    flows.push_back(f);
  }
  const double lambda = rng.uniform(0, 2);
  const auto result = link::link(cands, flows, {lambda, std::nullopt});
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> choice(T, 0);
  std::function<void(std::size_t)> walk = [&](std::size_t t) {
    if (t == T) {
      best = std::max(best, link::path_objective(cands, flows, choice, lambda));
      return;
    }
    for (std::size_t c = 0; c < cands[t].size(); ++c) {
      choice[t] = c;
      walk(t + 1);
    }
  };
  walk(0);
  return result.objective == best;
}

bool check_kmeans(Rng& rng) {
  const std::size_t n = 1 + rng.below(8);
  const int k = 1 + static_cast<int>(rng.below(3));
  std::vector<double> v(n);
  for (auto& x : v) x = std::round(rng.uniform(-10, 10) * 4) / 4;
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  // Optimal 1-D clusters are contiguous in sorted order: try every cut.
  double best = std::numeric_limits<double>::infinity();
  auto sse = [&](std::size_t a, std::size_t b) {
    double m = 0;
    for (std::size_t i = a; i < b; ++i) m += sorted[i];
    m /= static_cast<double>(b - a);
    double s = 0;
    for (std::size_t i = a; i < b; ++i) s += (sorted[i] - m) * (sorted[i] - m);
    return s;
  };
  const std::size_t groups = std::min<std::size_t>(k, n);
  std::function<void(std::size_t, std::size_t, double)> cut = [&](std::size_t start, std::size_t left, double acc) {
    if (left == 1) {
      best = std::min(best, acc + sse(start, n));
      return;
    }
    for (std::size_t end = start + 1; end + left - 1 <= n; ++end) cut(end, left - 1, acc + sse(start, end));
  };
  cut(0, groups, 0.0);
  const auto r = kmeans_1d(v, k, rng.next());
  return std::abs(r.objective - best) <= 1e-9 * (1 + best);
}

bool check_ap() {
  const std::vector<double> scores{0.9, 0.8, 0.7};
  const std::vector<bool> pos{true, false, true};
  return std::abs(eval::average_precision(scores, pos) - 5.0 / 6.0) < 1e-12;
}

bool check_hlpf_translation(Rng& rng) {
  PoseSequence seq;
  const auto names = default_joint_names();
  const std::size_t T = 3 + rng.below(5);
  for (std::size_t t = 0; t < T; ++t) {
    Pose p;
    p.joint_names = names;
    for (std::size_t j = 0; j < names.size(); ++j)
      p.joints.push_back({static_cast<double>(rng.below(64)), static_cast<double>(rng.below(64))});
    p.joints[0] = {32, 10};
    p.joints[names.size() - 3] = {32, 40};
    seq.frames.push_back(p);
  }
  const hlpf::HlpfConfig cfg{4, 1, 0, KMeansInit::optimal};
  const auto feats = hlpf::video_features(seq, cfg);
  const auto codebook = hlpf::fit_codebooks(std::span(&feats, 1), cfg);
  auto moved = seq;
  const double dx = static_cast<double>(rng.below(100)) - 50, dy = static_cast<double>(rng.below(100)) - 50;
  for (auto& p : moved.frames)
    for (auto& j : p.joints) j = {j.x + dx, j.y + dy};
  return hlpf::encode_video(seq, codebook, cfg) == hlpf::encode_video(moved, codebook, cfg);
}

}  // namespace

int selfcheck(std::size_t cases, std::uint64_t seed, std::ostream& out) {
  int failures = 0;
  std::uint64_t stream = 0;
  auto report = [&](const std::string& name, std::size_t n, const std::function<bool(Rng&)>& check) {
    Rng rng(derive_seed(seed, stream++));
    std::size_t failed = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (!check(rng)) ++failed;
    out << (failed == 0 ? "PASS " : "FAIL ") << name << " (" << n - failed << "/" << n << ")\n";
    if (failed) ++failures;
  };
  report("flow quantization closed form", 1, [](Rng&) { return check_quantization(); });
  report("aggregation invariants", cases, check_aggregation);
  report("linker matches exhaustive search", cases, check_linker);
  report("1-D k-means matches exhaustive partition", cases, check_kmeans);
  report("average precision fixture", 1, [](Rng&) { return check_ap(); });
  report("pose features ignore translation", std::max<std::size_t>(1, cases / 10), check_hlpf_translation);
  return failures == 0 ? 0 : 1;
}

}  // namespace pcnn::cli
