#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pcnn/flowprep.hpp"
#include "pcnn/pose.hpp"

namespace pcnn::link {

struct Candidate {
  Pose pose;
  double score = 0.0;
};

// candidates[t] lists the pose hypotheses detected in frame t.
using CandidateSet = std::vector<std::vector<Candidate>>;

struct LinkerConfig {
  // Weight of the flow-inconsistency term.
  double lambda = 1.0;
  // Candidates scoring below the floor are dropped before linking, unless
  // that would leave a frame empty.
  std::optional<double> score_floor;
};

struct LinkResult {
  PoseSequence sequence;
  std::vector<std::size_t> choice;  // selected candidate index per frame
  double objective = 0.0;
};

// Bilinear flow at a point in pixel-centre coordinates. Samples outside the
// field read zero, so points well outside return (0, 0).
Point2 flow_at(const FlowField& flow, Point2 point);

// Sum over joints of |next_j - (prev_j + flow(prev_j))|^2.
double transition_cost(const Pose& prev, const Pose& next, const FlowField& flow);

// Objective of a fixed path, accumulated frame by frame:
// score_1, then for each t: (acc - lambda * cost_t) + score_{t+1}.
double path_objective(const CandidateSet& candidates, std::span<const FlowField> flows,
                      std::span<const std::size_t> choice, double lambda);

// Viterbi over candidates maximizing detector score minus lambda times flow
// inconsistency. flows[t] is the motion from frame t to t+1. Ties pick the
// lowest candidate index.
LinkResult link(const CandidateSet& candidates, std::span<const FlowField> flows, const LinkerConfig& config = {},
                std::string video_id = {});

// Candidate file: pose-file header, then lines "frame score x y x y ...";
// frames may repeat (one line per candidate) and must appear in order.
CandidateSet read_candidate_file(const std::filesystem::path& path);
void write_candidate_file(const std::filesystem::path& path, const CandidateSet& candidates);

}  // namespace pcnn::link
