#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "partswitch/dataset.hpp"
#include "partswitch/inference.hpp"
#include "partswitch/model.hpp"

namespace partswitch {

/// Deterministic random source for scene generation. Uniforms take the top 53
/// bits of mt19937_64 and normals use Box-Muller, so output depends only on
/// the seed and not on the standard library's distribution implementations.
class SceneRng {
 public:
  static constexpr const char* kName = "mt19937_64/box-muller/v1";

  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double sigma = 1.0);
  /// Inclusive range.
  int uniform_int(int lo, int hi);
  bool bernoulli(double p);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct SynthConfig {
  std::uint64_t seed = 7;
  int images = 200;
  double negative_fraction = 0.3;
  int min_objects = 1;
  int max_objects = 3;
  double image_width = 640.0;
  double image_height = 480.0;
  /// Holistic box width, log-uniform between these.
  double min_object_size = 40.0;
  double max_object_size = 240.0;
  /// Part center displacement, relative to the holistic size.
  double part_offset_sigma = 0.04;
  /// Part log-size noise.
  double part_scale_sigma = 0.05;
  /// Probability that a part is occluded: no ground-truth box, no hypothesis.
  double occlusion_rate = 0.0;
  /// Objects with a smaller holistic area get only holistic hypotheses.
  double lowres_area_threshold = 0.0;
  /// Probability that an object is strongly deformed: larger part offsets and
  /// a weak holistic activation.
  double deformation_rate = 0.0;
  double deformation_offset_scale = 4.0;
  double deformation_score_drop = 2.0;
  /// Relative jitter of a true hypothesis box against its ground truth.
  double hypothesis_jitter_sigma = 0.03;
  double score_noise_sigma = 0.1;
  /// Raw score of a true hypothesis: affinity - penalty * |jitter| + noise.
  std::vector<double> planted_affinity{1.0, 0.8, 0.8, 0.6};
  double jitter_score_penalty = 4.0;
  int distractors_per_node = 3;
  double background_score_mean = 0.4;
  double background_score_sigma = 0.3;
  std::vector<std::string> node_names{"object", "head", "torso", "legs"};
  std::string class_name = "animal";
  /// Scores the planted configurations in the truth record; defaults to
  /// planted_params_for(spec).
  std::optional<ModelParams> planted_params;

  /// Throws std::invalid_argument on negative sigmas, rates outside [0, 1],
  /// or more nodes than canonical layouts.
  void check() const;
};

struct PlantedObject {
  std::string image_id;
  int object_index = 0;
  std::uint32_t planted_mask = 0;  // nodes with a detectable true hypothesis
  std::optional<double> planted_score;
  bool deformed = false;
  bool lowres = false;
  std::uint32_t occluded_mask = 0;
  Configuration planted_config;
};

struct SynthTruth {
  std::string rng = SceneRng::kName;
  std::uint64_t seed = 0;
  ModelParams planted_params;
  std::vector<PlantedObject> objects;
};

struct SynthDataset {
  GraphSpec spec{{"object"}};
  std::vector<ImageData> images;
  SynthTruth truth;
};

/// Quadratic spatial and scale preferences centred on the canonical layout.
ModelParams planted_params_for(const GraphSpec& spec);

SynthDataset generate_dataset(const SynthConfig& cfg);

/// Naive enumeration scoring every configuration with score_configuration.
/// Returns nullopt for an empty search space. Throws std::length_error beyond
/// 10^7 configurations.
std::optional<ScoredConfiguration> brute_force_best(const HypothesisSet& hyps,
                                                    const ModelParams& params,
                                                    const GraphSpec& spec,
                                                    const DetectConfig& cfg = {});

}  // namespace partswitch
