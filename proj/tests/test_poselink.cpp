#include <doctest.h>

#include <functional>
#include <limits>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"
#include "pcnn/poselink.hpp"
#include "support.hpp"

using namespace pcnn;
using namespace pcnn::link;

namespace {

CandidateSet random_candidates(Rng& rng, std::size_t T, std::size_t C, std::size_t J, double extent = 10) {
  CandidateSet set(T);
  for (auto& frame : set) {
    const std::size_t n = 1 + rng.below(C);
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<Point2> joints;
      for (std::size_t j = 0; j < J; ++j) joints.push_back({rng.uniform(0, extent), rng.uniform(0, extent)});
      frame.push_back({testing::make_pose(joints), rng.uniform(-2, 2)});
    }
  }
  return set;
}

std::vector<FlowField> random_flows(Rng& rng, std::size_t n, int w, int h, double amp) {
  std::vector<FlowField> flows;
  for (std::size_t t = 0; t < n; ++t) {
    FlowField f(w, h);
    for (auto& v : f.vx) v = static_cast<float>(rng.uniform(-amp, amp));
    for (auto& v : f.vy) v = static_cast<float>(rng.uniform(-amp, amp));
    flows.push_back(f);
  }
  return flows;
}

// Independent objective: sum of scores minus lambda times squared flow residuals.
double brute_objective(const CandidateSet& c, const std::vector<FlowField>& flows, const std::vector<std::size_t>& pick,
                       double lambda) {
  double total = 0;
  for (std::size_t t = 0; t < c.size(); ++t) total += c[t][pick[t]].score;
  for (std::size_t t = 0; t + 1 < c.size(); ++t) {
    const Pose& a = c[t][pick[t]].pose;
    const Pose& b = c[t + 1][pick[t + 1]].pose;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const Point2 f = flow_at(flows[t], a.joints[j]);
      const double ex = b.joints[j].x - a.joints[j].x - f.x, ey = b.joints[j].y - a.joints[j].y - f.y;
      total -= lambda * (ex * ex + ey * ey);
    }
  }
  return total;
}

double exhaustive_best(const CandidateSet& c, const std::vector<FlowField>& flows, double lambda) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(c.size(), 0);
  std::function<void(std::size_t)> go = [&](std::size_t t) {
    if (t == c.size()) {
      best = std::max(best, path_objective(c, flows, pick, lambda));
      return;
    }
    for (std::size_t i = 0; i < c[t].size(); ++i) {
      pick[t] = i;
      go(t + 1);
    }
  };
  go(0);
  return best;
}

}  // namespace

TEST_CASE("flow_at samples bilinearly with zero padding") {
  FlowField f(3, 2);
  f.u(0, 0) = 0;
  f.u(1, 0) = 2;
  f.v(2, 1) = -4;
  CHECK(flow_at(f, {1, 0}).x == 2);
  CHECK(flow_at(f, {2, 1}).y == -4);
  CHECK(flow_at(f, {0.5, 0}).x == doctest::Approx(1));
  CHECK(flow_at(f, {10, 10}) == Point2{0, 0});
  CHECK(flow_at(f, {-5, 0}) == Point2{0, 0});
  // Half a pixel past the border blends with zero.
  CHECK(flow_at(f, {2.5, 1}).y == doctest::Approx(-2));
  CHECK(flow_at(f, {-0.5, 0}).x == doctest::Approx(0));
}

TEST_CASE("single frame picks the best score") {
  CandidateSet c(1);
  for (double s : {0.1, 0.7, 0.3}) c[0].push_back({testing::make_pose({{0, 0}, {1, 1}}), s});
  const auto r = link::link(c, {});
  CHECK(r.choice == std::vector<std::size_t>{1});
  CHECK(r.objective == 0.7);
  CHECK(r.sequence.length() == 1);
}

TEST_CASE("lambda zero decouples frames") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_candidates(rng, 5, 4, 3);
    const auto flows = random_flows(rng, 4, 10, 10, 2);
    const auto r = link::link(c, flows, {0.0, std::nullopt});
    for (std::size_t t = 0; t < c.size(); ++t) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < c[t].size(); ++i)
        if (c[t][i].score > c[t][best].score) best = i;
      CHECK(r.choice[t] == best);
    }
  }
}

TEST_CASE("three frames with three candidates match all 27 paths") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    CandidateSet c(3);
    for (auto& frame : c)
      for (int i = 0; i < 3; ++i) {
        std::vector<Point2> joints;
        for (int j = 0; j < 4; ++j) joints.push_back({rng.uniform(0, 5), rng.uniform(0, 5)});
        frame.push_back({testing::make_pose(joints), rng.uniform(-1, 1)});
      }
    const std::vector<FlowField> zero(2, FlowField(8, 8));
    const auto r = link::link(c, zero);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> arg;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t d = 0; d < 3; ++d) {
          const double v = brute_objective(c, zero, {a, b, d}, 1.0);
          if (v > best) best = v, arg = {a, b, d};
        }
    CHECK(r.objective == doctest::Approx(best).epsilon(1e-12));
    CHECK(r.choice == arg);
  }
}

TEST_CASE("property: optimum matches exhaustive search with random flow") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.below(6);
    const auto c = random_candidates(rng, T, 4, 2 + rng.below(4));
    const auto flows = random_flows(rng, T - 1, 12, 12, 3);
    const double lambda = rng.uniform(0, 3);
    const auto r = link::link(c, flows, {lambda, std::nullopt});
    CHECK(r.objective == exhaustive_best(c, flows, lambda));
    CHECK(r.objective == path_objective(c, flows, r.choice, lambda));
    CHECK(brute_objective(c, flows, r.choice, lambda) == doctest::Approx(r.objective).epsilon(1e-12));
  }
}

TEST_CASE("property: shifting one frame's scores keeps the path") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 2 + rng.below(4);
    auto c = random_candidates(rng, T, 4, 3);
    const auto flows = random_flows(rng, T - 1, 12, 12, 1);
    const auto before = link::link(c, flows);
    const std::size_t t = rng.below(T);
    for (auto& cand : c[t]) cand.score += 0.5;  // exact in binary
    CHECK(link::link(c, flows).choice == before.choice);
  }
}

TEST_CASE("one candidate per frame is returned as is") {
  Rng rng(12);
  const auto c = random_candidates(rng, 5, 1, 3);
  const auto flows = random_flows(rng, 4, 12, 12, 1);
  for (double lambda : {0.0, 1.0, 100.0}) {
    const auto r = link::link(c, flows, {lambda, std::nullopt}, "vid");
    CHECK(r.choice == std::vector<std::size_t>(5, 0));
    CHECK(r.sequence.video_id == "vid");
    for (std::size_t t = 0; t < 5; ++t) CHECK(r.sequence.frames[t].joints == c[t][0].pose.joints);
  }
}

TEST_CASE("score floor drops weak candidates unless a frame would empty") {
  CandidateSet c(2);
  const Pose a = testing::make_pose({{0, 0}, {1, 0}});
  const Pose b = testing::make_pose({{5, 5}, {6, 5}});
  c[0] = {{a, 1.0}, {b, 0.5}};
  c[1] = {{b, 0.2}, {a, 0.1}};
  const std::vector<FlowField> zero(1, FlowField(8, 8));
  // Without a floor the smooth path a -> a wins.
  CHECK(link::link(c, zero).choice == std::vector<std::size_t>{0, 1});
  const auto floored = link::link(c, zero, {1.0, 0.15});
  CHECK(floored.choice == std::vector<std::size_t>{1, 0});
  // A floor above every candidate of a frame leaves that frame untouched.
  CHECK(link::link(c, zero, {1.0, 0.5}).choice[1] == 1);
}

TEST_CASE("linker errors") {
  CHECK_THROWS_AS(link::link({}, {}), ValidationError);
  CandidateSet c(2);
  c[0].push_back({testing::make_pose({{0, 0}, {1, 1}}), 1});
  CHECK_THROWS_AS(link::link(c, std::vector<FlowField>(1, FlowField(2, 2))), ValidationError);
  c[1].push_back({testing::make_pose({{0, 0}, {1, 1}}), 1});
  CHECK_THROWS_AS(link::link(c, {}), ValidationError);
  CHECK_THROWS_AS(link::link(c, std::vector<FlowField>(1, FlowField(2, 2)), {-1.0, std::nullopt}), ValidationError);
}

TEST_CASE("candidate file round trip") {
  testing::TempDir dir;
  Rng rng(13);
  auto c = random_candidates(rng, 3, 3, 2);
  for (auto& f : c)
    for (auto& cand : f) {
      cand.score = std::round(cand.score * 8) / 8;
      for (auto& j : cand.pose.joints) j = {std::round(j.x * 4) / 4, std::round(j.y * 4) / 4};
    }
  write_candidate_file(dir / "c.txt", c);
  const auto back = read_candidate_file(dir / "c.txt");
  REQUIRE(back.size() == c.size());
  for (std::size_t t = 0; t < c.size(); ++t) {
    REQUIRE(back[t].size() == c[t].size());
    for (std::size_t i = 0; i < c[t].size(); ++i) {
      CHECK(back[t][i].score == c[t][i].score);
      CHECK(back[t][i].pose.joints == c[t][i].pose.joints);
    }
  }
  io::write_text(dir / "bad.txt", "#joints a b\n1 0.5 0 0 1 1\n");
  CHECK_THROWS_AS(read_candidate_file(dir / "bad.txt"), FormatError);
}
