#include "pcnn/poselink.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn::link {

Point2 flow_at(const FlowField& flow, Point2 point) {
  flow.validate();
  const double fx = std::floor(point.x);
  const double fy = std::floor(point.y);
  if (!(fx >= -1.0 && fy >= -1.0 && fx < flow.width && fy < flow.height)) return {0.0, 0.0};
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = point.x - fx;
  const double ay = point.y - fy;
  Point2 out;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int x = x0 + dx;
      const int y = y0 + dy;
      if (x < 0 || y < 0 || x >= flow.width || y >= flow.height) continue;
      const double w = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
      if (w == 0.0) continue;
      out.x += w * flow.u(x, y);
      out.y += w * flow.v(x, y);
    }
  }
  return out;
}

double transition_cost(const Pose& prev, const Pose& next, const FlowField& flow) {
  if (prev.size() != next.size()) throw ValidationError("candidates have different joint counts");
  double cost = 0.0;
  for (std::size_t j = 0; j < prev.size(); ++j) {
    const Point2 f = flow_at(flow, prev.joints[j]);
    const double ex = next.joints[j].x - (prev.joints[j].x + f.x);
    const double ey = next.joints[j].y - (prev.joints[j].y + f.y);
    cost += ex * ex + ey * ey;
  }
  return cost;
}

namespace {

void validate_inputs(const CandidateSet& candidates, std::span<const FlowField> flows) {
  if (candidates.empty()) throw ValidationError("no frames to link");
  if (flows.size() + 1 != candidates.size())
    throw ValidationError("expected " + std::to_string(candidates.size() - 1) + " flow fields, got " +
                          std::to_string(flows.size()));
  const auto& names = [&]() -> const std::vector<std::string>& {
    for (const auto& frame : candidates)
      if (!frame.empty()) return frame.front().pose.joint_names;
    throw ValidationError("frame has no pose candidates");
  }();
  for (std::size_t t = 0; t < candidates.size(); ++t) {
    if (candidates[t].empty()) throw ValidationError("frame " + std::to_string(t) + " has no pose candidates");
    for (const auto& c : candidates[t]) {
      c.pose.validate();
      if (c.pose.joint_names != names) throw ValidationError("candidates do not share a joint order");
      if (!std::isfinite(c.score)) throw ValidationError("candidate score is not finite");
    }
  }
  for (const auto& f : flows) f.validate();
}

}  // namespace

double path_objective(const CandidateSet& candidates, std::span<const FlowField> flows,
                      std::span<const std::size_t> choice, double lambda) {
  validate_inputs(candidates, flows);
  if (choice.size() != candidates.size()) throw ValidationError("path length does not match frame count");
  double acc = candidates[0].at(choice[0]).score;
  for (std::size_t t = 1; t < candidates.size(); ++t) {
    const auto& prev = candidates[t - 1].at(choice[t - 1]);
    const auto& cur = candidates[t].at(choice[t]);
    acc = (acc - lambda * transition_cost(prev.pose, cur.pose, flows[t - 1])) + cur.score;
  }
  return acc;
}

LinkResult link(const CandidateSet& candidates, std::span<const FlowField> flows, const LinkerConfig& config,
                std::string video_id) {
  validate_inputs(candidates, flows);
  if (!std::isfinite(config.lambda) || config.lambda < 0.0) throw ValidationError("lambda must be finite and >= 0");

  // Per-frame indices of the candidates that survive the score floor.
  const std::size_t T = candidates.size();
  std::vector<std::vector<std::size_t>> active(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < candidates[t].size(); ++c)
      if (!config.score_floor || candidates[t][c].score >= *config.score_floor) active[t].push_back(c);
    if (active[t].empty())
      for (std::size_t c = 0; c < candidates[t].size(); ++c) active[t].push_back(c);
  }

  std::vector<std::vector<double>> best(T);
  std::vector<std::vector<std::size_t>> back(T);
  for (std::size_t c : active[0]) best[0].push_back(candidates[0][c].score);
  for (std::size_t t = 1; t < T; ++t) {
    best[t].resize(active[t].size());
    back[t].resize(active[t].size());
    for (std::size_t i = 0; i < active[t].size(); ++i) {
      const auto& cur = candidates[t][active[t][i]];
      double bv = -std::numeric_limits<double>::infinity();
      std::size_t bj = 0;
      for (std::size_t j = 0; j < active[t - 1].size(); ++j) {
        const auto& prev = candidates[t - 1][active[t - 1][j]];
        const double v = best[t - 1][j] - config.lambda * transition_cost(prev.pose, cur.pose, flows[t - 1]);
        if (v > bv) {
          bv = v;
          bj = j;
        }
      }
      best[t][i] = bv + cur.score;
      back[t][i] = bj;
    }
  }

  std::size_t arg = 0;
  for (std::size_t i = 1; i < best[T - 1].size(); ++i)
    if (best[T - 1][i] > best[T - 1][arg]) arg = i;

  LinkResult res;
  res.objective = best[T - 1][arg];
  res.choice.assign(T, 0);
  for (std::size_t t = T; t-- > 0;) {
    res.choice[t] = active[t][arg];
    if (t > 0) arg = back[t][arg];
  }
  res.sequence.video_id = std::move(video_id);
  for (std::size_t t = 0; t < T; ++t) {
    Pose p = candidates[t][res.choice[t]].pose;
    p.score = candidates[t][res.choice[t]].score;
    res.sequence.frames.push_back(std::move(p));
  }
  return res;
}

CandidateSet read_candidate_file(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<std::string> names;
  CandidateSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line.rfind("#joints", 0) == 0) {
      std::string tag, n;
      ls >> tag;
      while (ls >> n) names.push_back(n);
      continue;
    }
    if (line[0] == '#') continue;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    if (names.empty()) throw FormatError(where + ": data before '#joints' header");
    long frame = -1;
    Candidate c;
    if (!(ls >> frame >> c.score)) throw FormatError(where + ": expected frame index and score");
    if (frame == static_cast<long>(set.size())) set.emplace_back();
    if (frame + 1 != static_cast<long>(set.size())) throw FormatError(where + ": frames must appear in order");
    c.pose.joint_names = names;
    c.pose.score = c.score;
    for (std::size_t j = 0; j < names.size(); ++j) {
      Point2 p;
      if (!(ls >> p.x >> p.y)) throw FormatError(where + ": too few coordinates");
      c.pose.joints.push_back(p);
    }
    std::string extra;
    if (ls >> extra) throw FormatError(where + ": trailing values");
    set.back().push_back(std::move(c));
  }
  if (set.empty()) throw FormatError(path.string() + ": no candidates");
  return set;
}

void write_candidate_file(const std::filesystem::path& path, const CandidateSet& candidates) {
  if (candidates.empty() || candidates.front().empty()) throw ValidationError("no candidates to write");
  std::string out = "#joints";
  for (const auto& n : candidates.front().front().pose.joint_names) out += " " + n;
  out += "\n";
  for (std::size_t t = 0; t < candidates.size(); ++t) {
    for (const auto& c : candidates[t]) {
      out += std::to_string(t) + " " + io::format_double(c.score);
      for (const auto& p : c.pose.joints) out += " " + io::format_double(p.x) + " " + io::format_double(p.y);
      out += "\n";
    }
  }
  io::write_text(path, out);
}

}  // namespace pcnn::link
