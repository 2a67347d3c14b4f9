#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "partswitch/model.hpp"

namespace partswitch {

struct PruneConfig {
  /// Per-node minimum raw score; missing entries mean no threshold.
  std::vector<double> unary_threshold;
  double nms_iou = 0.5;
  /// Per-node cap; missing entries use kDefaultMaxHypotheses.
  std::vector<int> max_hypotheses;

  static constexpr int kDefaultMaxHypotheses = 15;

  double threshold_for(int node) const;
  int cap_for(int node) const;
  /// Throws std::invalid_argument on nms_iou outside (0, 1) or a cap below 1.
  void check() const;
};

struct DetectConfig {
  double score_threshold = -std::numeric_limits<double>::infinity();
  std::size_t max_raw_detections = 100;
  /// Restricts the search to these pattern masks; empty means every pattern.
  std::vector<std::uint32_t> allowed_patterns;

  bool allows(std::uint32_t mask) const;
};

/// Per node: drops boxes with zero width or height, drops scores below the
/// node threshold, runs greedy NMS in (descending score, ascending id) order
/// suppressing iou > nms_iou, then truncates to the node cap.
HypothesisSet prune_hypotheses(std::span<const Hypothesis> candidates, int num_nodes,
                               const PruneConfig& cfg);

/// Threshold per node such that at least `retain` of the activations with
/// iou >= `match_iou` against a ground-truth box of that node score at or above
/// it. Nodes without any such activation get no threshold (-inf).
/// `gt_boxes[n]` lists the ground-truth boxes of node n in the same image as
/// the matching entry of `candidates`.
struct CalibrationImage {
  std::span<const Hypothesis> candidates;
  std::vector<std::vector<Box>> gt_boxes;
};
std::vector<double> calibrate_unary_thresholds(std::span<const CalibrationImage> images,
                                               int num_nodes, double match_iou, double retain);

/// Number of configurations the exhaustive search visits.
std::uint64_t count_configurations(const HypothesisSet& hyps, const DetectConfig& cfg = {});

/// Exact exhaustive MAP search over every allowed pattern and assignment.
/// Unary and pairwise terms are computed once per hypothesis (pair) and shared
/// across patterns. Returns configurations with score >= score_threshold in
/// canonical rank order, truncated to max_raw_detections.
std::vector<ScoredConfiguration> detect(const HypothesisSet& hyps, const ModelParams& params,
                                        const GraphSpec& spec, const DetectConfig& cfg);

}  // namespace partswitch
