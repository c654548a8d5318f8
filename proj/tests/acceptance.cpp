// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ap_fixtures.hpp"
#include "commands.hpp"
#include "pcnn/aggregate.hpp"
#include "pcnn/eval.hpp"
#include "pcnn/flowprep.hpp"
#include "pcnn/fvenc.hpp"
#include "pcnn/hlpf.hpp"
#include "pcnn/io.hpp"
#include "pcnn/kmeans1d.hpp"
#include "pcnn/learn.hpp"
#include "pcnn/manifest.hpp"
#include "pcnn/poselink.hpp"
#include "pcnn/rng.hpp"
#include "support.hpp"

using namespace pcnn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  char timing[64];
  std::snprintf(timing, sizeof timing, "%.2fs of %.0fs", secs, budget_s);
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << name << " (" << o.detail
            << (o.detail.empty() ? "" : "; ") << timing << (in_time ? "" : ", over budget") << ")" << std::endl;
}

DescriptorSeries random_series(Rng& rng, std::size_t T, std::size_t k) {
  DescriptorSeries s;
  s.vectors = MatrixF(T, k);
  for (auto& v : s.vectors.data()) v = static_cast<float>(rng.uniform(-10, 10));
  return s;
}

// ---- 1 ----

Outcome descriptor_dimension() {
  AggregationConfig cfg;
  const std::size_t k = 4096;
  const std::size_t len = descriptor_length(cfg, k);
  Rng rng(1);
  std::vector<DescriptorSeries> series;
  Normalizer norm;
  for (Stream s : {Stream::appearance, Stream::flow})
    for (Part p : kAllParts) {
      auto x = random_series(rng, 12, k);
      x.part = p;
      x.stream = s;
      series.push_back(std::move(x));
      norm.set(p, s, 1.0);
    }
  const auto d = assemble(series, cfg, norm);
  d.validate();
  const bool ok = len == 163840 && d.values.size() == 163840 && d.layout.size() == 40;
  return {ok, "length " + std::to_string(len) + ", assembled " + std::to_string(d.values.size())};
}

// ---- 2 ----

int closed_form_byte(double v) {
  const double x = 16.0 * v + 128.0;
  const double r = x < 0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5);
  return static_cast<int>(std::min(255.0, std::max(0.0, r)));
}

Outcome flow_quantization() {
  FlowField f(41, 41);
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) {
      f.u(x, y) = static_cast<float>(x - 20);
      f.v(x, y) = static_cast<float>(y - 20);
    }
  const auto img = quantize_flow(f);
  std::size_t bad = 0, clamped = 0;
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) {
      const double vx = x - 20, vy = y - 20;
      const int ex = closed_form_byte(vx), ey = closed_form_byte(vy), em = closed_form_byte(std::hypot(vx, vy));
      bad += img.at(x, y, 0) != ex;
      bad += img.at(x, y, 1) != ey;
      bad += img.at(x, y, 2) != em;
      clamped += ex == 255 || ex == 0;
    }
  // Half-integer mapped values round away from zero.
  for (int q = -80; q <= 80; ++q) bad += quantize_value(q / 32.0, {}) != closed_form_byte(q / 32.0);
  return {bad == 0 && clamped > 0,
          std::to_string(41 * 41) + " flow vectors, " + std::to_string(bad) + " mismatches"};
}

// ---- 3 ----

Outcome aggregation_invariants() {
  Rng rng(3);
  const int cases = 1000;
  int perm_bad = 0, hull_bad = 0, order_bad = 0, const_bad = 0, fallback_bad = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t T = 1 + rng.below(15), k = 1 + rng.below(8);
    const auto s = random_series(rng, T, k);

    std::vector<std::size_t> perm(T);
    for (std::size_t i = 0; i < T; ++i) perm[i] = i;
    rng.shuffle(perm);
    DescriptorSeries shuffled = s;
    for (std::size_t t = 0; t < T; ++t)
      std::copy(s.vectors.row(perm[t]).begin(), s.vectors.row(perm[t]).end(), shuffled.vectors.row(t).begin());
    perm_bad += static_descriptor(s) != static_descriptor(shuffled);

    // Appending a frame can only widen the hull.
    auto longer = s;
    std::vector<float> extra(k);
    for (auto& v : extra) v = static_cast<float>(rng.uniform(-12, 12));
    longer.vectors.push_row(extra);
    const auto a = min_max(s), b = min_max(longer);
    for (std::size_t j = 0; j < k; ++j) {
      hull_bad += b.min[j] > a.min[j] || b.max[j] < a.max[j];
      order_bad += a.min[j] > a.max[j];
      for (std::size_t t = 0; t < T; ++t) hull_bad += s.vectors(t, j) < a.min[j] || s.vectors(t, j) > a.max[j];
    }

    auto flat = s;
    for (std::size_t t = 1; t < T; ++t)
      std::copy(s.vectors.row(0).begin(), s.vectors.row(0).end(), flat.vectors.row(t).begin());
    const int dt = 1 + static_cast<int>(rng.below(8));
    for (float v : dynamic_descriptor(flat, dt)) const_bad += v != 0.0f;

    // Offset falls back to T-1; one frame gives one zero row.
    const auto diffs = temporal_diffs(s, dt);
    const std::size_t step = T == 1 ? 0 : std::min<std::size_t>(dt, T - 1);
    const std::size_t rows = T == 1 ? 1 : T - step;
    if (diffs.rows() != rows || diffs.cols() != k) {
      ++fallback_bad;
      continue;
    }
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t j = 0; j < k; ++j) {
        const float expected = T == 1 ? 0.0f : s.vectors(t + step, j) - s.vectors(t, j);
        fallback_bad += diffs(t, j) != expected;
      }
  }
  const int total = perm_bad + hull_bad + order_bad + const_bad + fallback_bad;
  std::ostringstream d;
  d << cases << " cases each; violations: permutation " << perm_bad << ", hull " << hull_bad << ", m<=M "
    << order_bad << ", constant " << const_bad << ", fallback " << fallback_bad;
  return {total == 0, d.str()};
}

// ---- 4 ----

Outcome linker_optimality() {
  Rng rng(4);
  const int cases = 500;
  int bad = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t T = 1 + rng.below(6), C = 1 + rng.below(4), J = 2 + rng.below(4);
    link::CandidateSet cands(T);
    for (auto& frame : cands) {
      const std::size_t n = 1 + rng.below(C);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<Point2> joints;
        for (std::size_t j = 0; j < J; ++j) joints.push_back({rng.uniform(-2, 18), rng.uniform(-2, 14)});
        frame.push_back({testing::make_pose(joints), rng.uniform(-3, 3)});
      }
    }
    std::vector<FlowField> flows;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      FlowField f(16, 12);
      for (auto& v : f.vx) v = static_cast<float>(rng.uniform(-2, 2));
      for (auto& v : f.vy) v = static_cast<float>(rng.uniform(-2, 2));
      flows.push_back(f);
    }
    const double lambda = rng.uniform(0, 1.5);
    const auto res = link::link(cands, flows, {lambda, std::nullopt});

    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> choice(T, 0);
    std::function<void(std::size_t)> walk = [&](std::size_t t) {
      if (t == T) {
        best = std::max(best, link::path_objective(cands, flows, choice, lambda));
        return;
      }
      for (std::size_t i = 0; i < cands[t].size(); ++i) {
        choice[t] = i;
        walk(t + 1);
      }
    };
    walk(0);
    const bool same_path = link::path_objective(cands, flows, res.choice, lambda) == res.objective;
    bad += !(res.objective == best && same_path);
  }
  return {bad == 0, std::to_string(cases) + " instances, " + std::to_string(bad) + " differ from exhaustive search"};
}

// ---- 5 ----

std::vector<double> naive_fisher(const MatrixD& x, const fv::GmmModel& g) {
  const std::size_t K = g.components(), d = g.dim(), n = x.rows();
  std::vector<double> out(2 * K * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> dens(K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double p = g.weights[k];
      for (std::size_t j = 0; j < d; ++j) {
        const double v = g.variances(k, j), z = x(i, j) - g.means(k, j);
        p *= std::exp(-0.5 * z * z / v) / std::sqrt(2 * std::numbers::pi * v);
      }
      dens[k] = p;
      total += p;
    }
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < d; ++j) {
        const double u = (x(i, j) - g.means(k, j)) / std::sqrt(g.variances(k, j));
        out[2 * k * d + j] += dens[k] / total * u / (n * std::sqrt(g.weights[k]));
        out[2 * k * d + d + j] += dens[k] / total * (u * u - 1) / (n * std::sqrt(2 * g.weights[k]));
      }
  }
  return out;
}

Outcome fisher_vectors() {
  Rng rng(5);
  const int cases = 200;
  int enc_bad = 0, ll_bad = 0;
  double worst = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = 1 + rng.below(20), K = 1 + rng.below(3), d = 1 + rng.below(4);
    const auto x = testing::random_matrix(rng, n, d, -3, 3);
    fv::GmmModel g;
    g.means = testing::random_matrix(rng, K, d, -2, 2);
    g.variances = testing::random_matrix(rng, K, d, 0.3, 2);
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += g.weights.emplace_back(rng.uniform(0.1, 1));
    for (auto& w : g.weights) w /= s;
    const auto fast = fv::fisher_encode(x, g);
    const auto ref = naive_fisher(x, g);
    double err = 0;
    for (std::size_t i = 0; i < fast.size(); ++i) err = std::max(err, std::abs(fast[i] - ref[i]));
    worst = std::max(worst, err);
    enc_bad += !(err <= 1e-9);

    if (n >= K) {
      const auto fit = fv::gmm_fit(x, static_cast<int>(K), rng.next(), {100, 0.0, 1e-3});
      const auto& h = fit.log_likelihood_history;
      for (std::size_t i = 1; i < h.size(); ++i) ll_bad += h[i] < h[i - 1] - 1e-12 * std::abs(h[i - 1]);
    }
  }
  std::ostringstream d;
  d << cases << " instances, max encoding error " << worst << ", " << ll_bad << " log-likelihood decreases";
  return {enc_bad == 0 && ll_bad == 0, d.str()};
}

// ---- 6 ----

PoseSequence integer_sequence(Rng& rng, std::size_t T) {
  PoseSequence seq;
  for (std::size_t t = 0; t < T; ++t) {
    Pose p;
    p.joint_names = default_joint_names();
    for (std::size_t j = 0; j < p.joint_names.size(); ++j)
      p.joints.push_back({static_cast<double>(rng.below(256)), static_cast<double>(rng.below(256))});
    const std::size_t hip = p.index_of(joint::kHipCenter);
    if (p.joints[0] == p.joints[hip]) p.joints[0].x += 1;
    seq.frames.push_back(p);
  }
  return seq;
}

// Minimum SSE over every assignment of values to at most k groups
// (restricted growth strings enumerate each partition once).
double exhaustive_partition_sse(const std::vector<double>& v, int k) {
  const std::size_t n = v.size();
  std::vector<int> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
    if (i == n) {
      double sse = 0;
      for (int g = 0; g < used; ++g) {
        double sum = 0;
        int cnt = 0;
        for (std::size_t j = 0; j < n; ++j)
          if (label[j] == g) {
            sum += v[j];
            ++cnt;
          }
        const double mean = sum / cnt;
        for (std::size_t j = 0; j < n; ++j)
          if (label[j] == g) sse += (v[j] - mean) * (v[j] - mean);
      }
      best = std::min(best, sse);
      return;
    }
    for (int g = 0; g <= std::min(used, k - 1); ++g) {
      label[i] = g;
      rec(i + 1, std::max(used, g + 1));
    }
  };
  rec(0, 0);
  return best;
}

Outcome pose_features() {
  Rng rng(6);
  int hist_bad = 0, km_bad = 0;
  const int seq_cases = 100, km_cases = 300;
  const hlpf::HlpfConfig cfg{8, 1, 0, KMeansInit::optimal};
  for (int c = 0; c < seq_cases; ++c) {
    std::vector<hlpf::VideoFeatures> train;
    for (int i = 0; i < 3; ++i) train.push_back(hlpf::video_features(integer_sequence(rng, 3 + rng.below(6)), cfg));
    const auto cb = hlpf::fit_codebooks(train, cfg);
    const auto seq = integer_sequence(rng, 2 + rng.below(8));
    const auto base = hlpf::encode_video(seq, cb, cfg);
    const double dx = static_cast<double>(rng.below(2001)) - 1000, dy = static_cast<double>(rng.below(2001)) - 1000;
    for (double scale : {0.25, 0.5, 2.0, 4.0, 1024.0}) {
      PoseSequence moved = seq;
      for (auto& f : moved.frames)
        for (auto& j : f.joints) j = {j.x * scale + dx, j.y * scale + dy};
      hist_bad += hlpf::encode_video(moved, cb, cfg) != base;
    }
  }
  for (int c = 0; c < km_cases; ++c) {
    const std::size_t n = 1 + rng.below(12);
    const int k = 1 + static_cast<int>(rng.below(3));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-10, 10);
    const double best = exhaustive_partition_sse(v, k);
    const auto r = kmeans_1d(v, k, rng.next());
    km_bad += !(std::abs(r.objective - best) <= 1e-9 * (1 + best));
  }
  std::ostringstream d;
  d << seq_cases * 5 << " transformed sequences with " << hist_bad << " histogram changes; " << km_cases
    << " k-means cases with " << km_bad << " non-optimal";
  return {hist_bad == 0 && km_bad == 0, d.str()};
}

// ---- 7 ----

double brute_ap(const std::vector<double>& s, const std::vector<bool>& pos) {
  double sum = 0;
  std::size_t P = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    ++P;
    std::size_t rank = 1, above = 1;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (j != i && (s[j] > s[i] || (s[j] == s[i] && j < i))) {
        ++rank;
        above += pos[j];
      }
    sum += static_cast<double>(above) / static_cast<double>(rank);
  }
  return P ? sum / static_cast<double>(P) : 0.0;
}

Outcome ranking_metrics() {
  int fixture_bad = 0;
  const auto& fixtures = testing::ap_fixtures();
  for (const auto& f : fixtures) fixture_bad += !(std::abs(eval::average_precision(f.scores, f.positives) - f.expected) < 1e-12);

  Rng rng(7);
  const int cases = 500;
  int map_bad = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = 1 + rng.below(8), C = 2 + rng.below(3);
    learn::ScoreMatrix s;
    for (std::size_t k = 0; k < C; ++k) s.classes.push_back("c" + std::to_string(k));
    for (std::size_t i = 0; i < n; ++i) s.row_ids.push_back("v" + std::to_string(i));
    s.values = MatrixD(n, C);
    for (auto& v : s.values.data()) v = static_cast<double>(rng.below(5));
    std::vector<std::string> labels(n);
    for (auto& l : labels) l = s.classes[rng.below(C)];
    double sum = 0;
    int used = 0;
    for (std::size_t k = 0; k < C; ++k) {
      std::vector<double> col(n);
      std::vector<bool> pos(n);
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        col[i] = s.values(i, k);
        pos[i] = labels[i] == s.classes[k];
        any = any || pos[i];
      }
      if (any) {
        sum += brute_ap(col, pos);
        ++used;
      }
    }
    map_bad += !(std::abs(eval::mean_ap(s, labels) - sum / used) < 1e-12);
  }
  std::ostringstream d;
  d << fixtures.size() << " AP fixtures (" << fixture_bad << " wrong), " << cases << " mAP cases (" << map_bad
    << " wrong)";
  return {fixture_bad == 0 && map_bad == 0 && fixtures.size() >= 10, d.str()};
}

// ---- 8 and 9 ----

struct Cli {
  std::ostringstream log;
  void operator()(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    log << out.str();
    if (code != 0) throw std::runtime_error("pcnn " + args.front() + " exited " + std::to_string(code) + ": " + err.str());
  }
};

struct PipelineScores {
  double pcnn = 0, pcnn_max = 0, fisher = 0, fused = 0;
};

double accuracy_of(const fs::path& scores, const DatasetManifest& m) {
  const auto s = learn::ScoreMatrix::load(scores);
  std::vector<std::string> labels;
  for (const auto& id : s.row_ids)
    for (const auto& e : m.entries)
      if (e.video_id == id) labels.push_back(e.label);
  // Independent argmax with first-index ties.
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.row_ids.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.classes.size(); ++c)
      if (s.values(i, c) > s.values(i, best)) best = c;
    hits += s.classes[best] == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(s.row_ids.size());
}

PipelineScores run_pipeline(const fs::path& dir, const std::string& jobs) {
  Cli pcnn;
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  const std::string manifest = p("data/manifest.tsv");
  pcnn({"synth", "--out", p("data"), "--seed", "7", "--train-per-class", "20", "--test-per-class", "10"});
  pcnn({"extract-series", "--manifest", manifest, "--provider", "test_embedder", "--dim", "64", "--seed", "7",
        "--jobs", jobs, "--out", p("series")});
  for (const std::string scheme : {"static_dyn_max_min", "max"}) {
    pcnn({"aggregate", "--manifest", manifest, "--series", p("series"), "--dim", "64", "--scheme", scheme, "--jobs",
          jobs, "--out", p("desc_" + scheme)});
    pcnn({"train", "--manifest", manifest, "--descriptors", p("desc_" + scheme), "--svm", "linear", "--seed", "7",
          "--out", p("svm_" + scheme + ".psvm")});
    pcnn({"score", "--manifest", manifest, "--descriptors", p("desc_" + scheme), "--model",
          p("svm_" + scheme + ".psvm"), "--out", p("scores_" + scheme + ".tsv")});
  }
  pcnn({"fv-fit", "--manifest", manifest, "--components", "8", "--seed", "7", "--out", p("fv_model")});
  pcnn({"fv-encode", "--manifest", manifest, "--model", p("fv_model"), "--jobs", jobs, "--out", p("desc_fv")});
  pcnn({"train", "--manifest", manifest, "--descriptors", p("desc_fv"), "--seed", "7", "--out", p("svm_fv.psvm")});
  pcnn({"score", "--manifest", manifest, "--descriptors", p("desc_fv"), "--model", p("svm_fv.psvm"), "--out",
        p("scores_fv.tsv")});
  pcnn({"fuse", "--scores", p("scores_static_dyn_max_min.tsv"), "--scores", p("scores_fv.tsv"), "--standardize",
        "--out", p("scores_fused.tsv")});

  const auto m = DatasetManifest::load(dir / "data/manifest.tsv");
  PipelineScores s;
  s.pcnn = accuracy_of(dir / "scores_static_dyn_max_min.tsv", m);
  s.pcnn_max = accuracy_of(dir / "scores_max.tsv", m);
  s.fisher = accuracy_of(dir / "scores_fv.tsv", m);
  s.fused = accuracy_of(dir / "scores_fused.tsv", m);
  return s;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100 * v);
  return buf;
}

Outcome end_to_end(const fs::path& dir) {
  const auto s = run_pipeline(dir, "1");
  const bool ok = s.pcnn >= 0.9 && s.pcnn > 0.5 && s.pcnn_max > 0.5 &&
                  s.fused >= std::max(s.pcnn, s.fisher) - 0.05 - 1e-12;
  return {ok, "static_dyn_max_min " + pct(s.pcnn) + ", max " + pct(s.pcnn_max) + ", FV " + pct(s.fisher) +
                  ", fused " + pct(s.fused)};
}

Outcome determinism(const fs::path& first, const fs::path& second) {
  run_pipeline(second, "2");
  std::size_t compared = 0, differing = 0;
  std::string example;
  for (const auto& entry : fs::recursive_directory_iterator(first)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".pcnv" && ext != ".psvm" && ext != ".tsv" && ext != ".pgmm" && ext != ".ppca") continue;
    const auto rel = fs::relative(entry.path(), first);
    ++compared;
    if (!fs::exists(second / rel) || io::read_file(entry.path()) != io::read_file(second / rel)) {
      ++differing;
      if (example.empty()) example = rel.string();
    }
  }
  std::string detail = std::to_string(compared) + " descriptor/model/score files compared, " +
                       std::to_string(differing) + " differ";
  if (!example.empty()) detail += " (e.g. " + example + ")";
  return {differing == 0 && compared > 100, detail};
}

}  // namespace

int main() {
  criterion(1, "descriptor dimension for k=4096, 5 parts, 2 streams, static_dyn_max_min", 1, descriptor_dimension);
  criterion(2, "flow quantization matches the closed form over vx, vy in [-20, 20]", 1, flow_quantization);
  criterion(3, "aggregation invariants on random series", 10, aggregation_invariants);
  criterion(4, "pose linker equals exhaustive optimum", 30, linker_optimality);
  criterion(5, "Fisher vectors match naive accumulation; EM log-likelihood non-decreasing", 30, fisher_vectors);
  criterion(6, "pose-feature histograms invariant to translation and scale; 1-D k-means optimal", 30, pose_features);
  criterion(7, "average precision fixtures and brute-force mAP", 5, ranking_metrics);

  testing::TempDir first, second;
  criterion(8, "synthetic end-to-end accuracy and fusion", 120, [&] { return end_to_end(first.path()); });
  criterion(9, "same seed gives byte-identical descriptors, models and scores", 120,
            [&] { return determinism(first.path(), second.path()); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
