#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partswitch/dataset.hpp"
#include "partswitch/inference.hpp"
#include "partswitch/model.hpp"

namespace partswitch {

struct LabeledExample {
  SparseVector phi;
  int sign = 1;  // +1 positive, -1 negative
  std::string image_id;
  Configuration config;
};

struct TrainConfig {
  double C = 1.0;
  double detect_iou = 0.40;
  int mining_rounds = 5;
  int negatives_per_image = 10;
  double solver_tolerance = 1e-6;
  std::size_t max_solver_iterations = 500;
  /// Patterns the model may use at train and test time; empty means all.
  std::vector<std::uint32_t> allowed_patterns;

  void check() const;
};

/// Node i is on iff the object has a box for it and some hypothesis of node i
/// overlaps that box with iou >= detect_iou; the qualifying hypothesis with the
/// highest raw score (ties: lowest id) is assigned. Returns nullopt when no
/// node qualifies. Throws std::invalid_argument without a holistic box.
std::optional<Configuration> assign_switch_labels(const NodeBoxes& gt, const HypothesisSet& hyps,
                                                  double detect_iou);

struct NegativeImage {
  std::string image_id;
  HypothesisSet hyps;  // pruned
};

/// Every configuration scoring > -1 on a negative image, at most
/// `negatives_per_image` of the highest-scoring ones per image.
std::vector<LabeledExample> mine_hard_negatives(const ModelParams& params, const GraphSpec& spec,
                                                std::span<const NegativeImage> images,
                                                const TrainConfig& cfg);

struct MaxMarginSolution {
  std::vector<double> weights;
  double objective = 0.0;       // primal value
  double dual_objective = 0.0;  // lower bound on the optimum
  std::size_t iterations = 0;
  bool converged = false;
};

/// 1/2 |w|^2 + C * sum_i max(0, 1 - y_i w.phi_i).
double primal_objective(std::span<const double> weights, std::span<const LabeledExample> examples,
                        double C);

/// L1-loss linear SVM without a separate bias (the pattern one-hot block plays
/// that role), solved in the dual by a primal-dual interior point method. The
/// pairwise scale features span several orders of magnitude, which stalls
/// coordinate descent; Newton steps do not care. Each step reduces to a D x D
/// system through the Woodbury identity. Stops once the duality gap is at most
/// `tol`, so the returned objective is within `tol` of the optimum.
MaxMarginSolution solve_max_margin(std::span<const LabeledExample> examples, double C, double tol,
                                   std::size_t max_iterations = 500);

struct RoundRecord {
  int round = 0;
  double objective = 0.0;
  double duality_gap = 0.0;
  std::size_t examples = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t new_negatives = 0;
  std::vector<double> weights;
};

struct PositiveImage {
  std::string image_id;
  HypothesisSet hyps;  // pruned
  std::vector<NodeBoxes> objects;
};

struct TrainResult {
  ModelParams params;
  std::vector<RoundRecord> rounds;
  std::vector<LabeledExample> positives;
  std::vector<LabeledExample> negatives;
  std::size_t rejected_positives = 0;
  std::size_t disallowed_positives = 0;
};

/// Labels positives once, bootstraps negatives with a unary-only model, then
/// alternates solving and mining. Throws std::runtime_error with counts when
/// every positive is rejected, and std::invalid_argument when either class is
/// empty.
TrainResult train(const GraphSpec& spec, std::span<const PositiveImage> positives,
                  std::span<const NegativeImage> negatives, const TrainConfig& cfg,
                  double sigmoid_slope = kDefaultSigmoidSlope);

}  // namespace partswitch
