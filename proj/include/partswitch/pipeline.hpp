#pragma once

#include <span>
#include <string>
#include <vector>

#include "partswitch/dataset.hpp"
#include "partswitch/inference.hpp"
#include "partswitch/learning.hpp"
#include "partswitch/metrics.hpp"
#include "partswitch/model.hpp"
#include "partswitch/postprocess.hpp"

namespace partswitch {

/// Everything detection needs: graph, weights, box regressors and the pruning
/// and search settings chosen at training time.
struct TrainedModel {
  GraphSpec spec{{"object"}};
  std::string class_name;
  ModelParams params;
  BoxRegressors regressors;
  PruneConfig prune;
  DetectConfig detect;

  friend bool operator==(const TrainedModel& a, const TrainedModel& b);
};

struct PipelineConfig {
  TrainConfig train;
  PruneConfig prune;
  /// Replace prune.unary_threshold with per-node thresholds calibrated on the
  /// positives so that `calibration_retain` of matching activations survive.
  bool calibrate_thresholds = true;
  double calibration_retain = 0.95;
  DetectConfig detect;
  double sigmoid_slope = kDefaultSigmoidSlope;
};

struct TrainingOutcome {
  TrainedModel model;
  TrainResult result;
};

TrainingOutcome train_model(const GraphSpec& spec, std::span<const ImageData> images,
                            const PipelineConfig& cfg, unsigned workers = 1);

struct Detection {
  std::string image_id;
  ScoredConfiguration scored;
  Box box;
  NodeBoxes node_boxes;  // assigned hypothesis boxes, nullopt for off nodes
};

/// Prune, search, part-based NMS, then box generation for one image.
std::vector<Detection> detect_image(const TrainedModel& model, const std::string& image_id,
                                    std::span<const Hypothesis> candidates);

/// Output ordered by image id, then canonical rank, whatever the worker count.
std::vector<Detection> detect_dataset(const TrainedModel& model, std::span<const ImageData> images,
                                      unsigned workers = 1);

std::vector<EvalDetection> to_eval_detections(std::span<const Detection> detections);
/// Objects of non-negative images, optionally limited to one class.
std::vector<EvalObject> to_eval_objects(const GraphSpec& spec,
                                        std::span<const ImageAnnotation> annotations,
                                        const std::string& class_name = {});

}  // namespace partswitch
