#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "partswitch/dataset.hpp"
#include "partswitch/model.hpp"

namespace partswitch {

/// Affine map from part corners g(z) (on parts in ascending node order, each
/// x1, y1, x2, y2) to the holistic box corners, for one holistic-off pattern.
struct BoxRegressor {
  DetectabilityPattern pattern;
  /// 4 rows x (4n + 1) columns, row-major; the last column multiplies 1.
  std::vector<double> weights;
  std::size_t trained_on = 0;
  bool fallback = false;

  int num_parts() const { return pattern.count(); }
  std::size_t cols() const { return 4 * static_cast<std::size_t>(num_parts()) + 1; }
  /// Part boxes in ascending node order. Fallback regressors return their
  /// union. The result always has ordered corners.
  Box predict(std::span<const Box> part_boxes) const;

  friend bool operator==(const BoxRegressor&, const BoxRegressor&) = default;
};

using BoxRegressors = std::map<std::uint32_t, BoxRegressor>;

struct RegressionSample {
  DetectabilityPattern pattern;
  std::vector<Box> part_boxes;  // ascending node order of the on-bits
  Box target;
};

/// Ordinary least squares per pattern when the samples give full column rank
/// (hence at least 4n + 1 of them); a union-box fallback otherwise. Samples
/// whose pattern has the holistic bit set are ignored.
BoxRegressors fit_box_regressors(std::span<const RegressionSample> samples);

/// Samples for every non-empty subset of an object's annotated parts, taken
/// from the annotated part boxes with the holistic box as target.
std::vector<RegressionSample> regression_samples(const GraphSpec& spec,
                                                 std::span<const NodeBoxes> objects);

/// Holistic-on: the holistic hypothesis box. Otherwise the pattern's regressor,
/// or the union of the part boxes when no regressor exists.
Box generate_box(const BoxRegressors& regressors, const Configuration& cfg,
                 const HypothesisSet& hyps);

/// Greedy suppression in canonical rank order: a detection survives iff it
/// shares no (node, hypothesis id) with an already kept detection.
std::vector<ScoredConfiguration> part_nms(std::vector<ScoredConfiguration> detections);

}  // namespace partswitch
