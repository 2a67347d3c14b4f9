#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "partswitch/dataset.hpp"
#include "partswitch/geometry.hpp"

namespace partswitch {

struct EvalConfig {
  double ap_iou = 0.5;
  double pcp_object_iou = 0.5;
  double pcp_part_iou = 0.4;
  /// Count ground-truth objects without a matching detection in the POP
  /// denominator. Off by default; with it on PCP <= POP no longer holds.
  bool pop_include_unmatched = false;

  void check() const;
};

struct EvalDetection {
  std::string image_id;
  double score = 0.0;
  Box box;
  std::uint32_t pattern_mask = 0;
  NodeBoxes node_boxes;  // per graph node; nullopt for off nodes
};

struct EvalObject {
  std::string image_id;
  Box box;
  NodeBoxes node_boxes;  // index 0 mirrors `box`
};

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct Matching {
  /// Detection indices in ranked order (descending score, input order on ties).
  std::vector<std::size_t> ranked;
  /// Per input detection, the object it matched as a true positive.
  std::vector<std::optional<std::size_t>> matched_object;
  std::vector<PrPoint> curve;  // one point per ranked detection
  double ap = 0.0;
};

/// Greedy VOC-style matching: in ranked order each detection claims the
/// unmatched object of its image with the highest iou, provided that iou is at
/// least `iou_thresh`. AP is the all-points interpolated area under the
/// precision/recall curve; 0 when there are no objects.
Matching match_detections(std::span<const EvalDetection> detections,
                          std::span<const EvalObject> objects, double iou_thresh);

double average_precision(std::span<const EvalDetection> detections,
                         std::span<const EvalObject> objects, double iou_thresh);

struct PartLocalization {
  int node = 0;
  std::string part;
  std::size_t matched_objects = 0;  // objects with a detection above pcp_object_iou
  std::size_t denominator = 0;      // matched objects that carry this part's box
  std::size_t estimated = 0;
  std::size_t correct = 0;
  std::optional<double> pop;  // percent
  std::optional<double> pcp;  // percent
  /// Percent of estimated parts that are correct.
  std::optional<double> pcp_of_estimated;
};

/// Each object takes its highest-scoring detection with iou > pcp_object_iou;
/// objects without one are left out. For a part, objects lacking its ground
/// truth box are left out of both denominators, so PCP <= POP.
std::vector<PartLocalization> pcp_pop(const GraphSpec& spec,
                                      std::span<const EvalDetection> detections,
                                      std::span<const EvalObject> objects,
                                      const EvalConfig& cfg);

enum class SizeClass { XS = 0, S = 1, M = 2, L = 3, XL = 4 };
inline constexpr std::array<std::string_view, 5> kSizeClassNames{"XS", "S", "M", "L", "XL"};

/// Percentile split 10/20/40/20/10 after a stable ascending sort by area;
/// boundaries at floor(fraction * N).
std::vector<SizeClass> size_classes(std::span<const double> areas);

struct SizeTable {
  std::array<std::size_t, 5> recalled{};
  std::array<std::size_t, 5> holistic_only{};
  /// Percent; nullopt for a class without recalled instances.
  std::array<std::optional<double>, 5> rate{};
};

/// Detections scoring at least `recall_threshold_score` are matched as for AP;
/// the recalled objects are split into size classes by holistic box area and,
/// per class, the share whose matching detection uses the holistic-only
/// pattern is reported.
SizeTable holistic_only_rate_by_size(std::span<const EvalDetection> detections,
                                     std::span<const EvalObject> objects,
                                     double recall_threshold_score, double iou_thresh = 0.5);

}  // namespace partswitch
