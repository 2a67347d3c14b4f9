#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "partswitch/geometry.hpp"

namespace partswitch {

using HypothesisId = std::int64_t;
inline constexpr HypothesisId kNoHypothesis = -1;

inline constexpr int kSpatialDim = 4;
inline constexpr int kScaleDim = 6;
inline constexpr int kPairwiseDim = kSpatialDim + kScaleDim;
inline constexpr int kMaxNodes = 16;
inline constexpr double kDefaultSigmoidSlope = 1.5;

/// Raised when pairwise features are requested for boxes whose sizes make the
/// normalizing denominators vanish.
class DegenerateGeometry : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Fully connected graph over K named nodes; node 0 is the holistic object.
/// Edges are all pairs (i, j), i < j, indexed in lexicographic order.
class GraphSpec {
 public:
  explicit GraphSpec(std::vector<std::string> node_names);

  int num_nodes() const { return static_cast<int>(names_.size()); }
  int num_edges() const { return num_nodes() * (num_nodes() - 1) / 2; }
  int num_patterns() const { return (1 << num_nodes()) - 1; }
  std::uint32_t full_mask() const { return (1u << num_nodes()) - 1u; }

  /// K + 10 * |E| + (2^K - 1).
  std::size_t dimension() const;
  std::size_t pairwise_offset(int edge) const;
  std::size_t bias_offset() const;

  const std::vector<std::string>& node_names() const { return names_; }
  const std::string& node_name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
  /// Throws std::out_of_range for unknown names.
  int node_index(std::string_view name) const;

  int edge_index(int i, int j) const;
  std::pair<int, int> edge(int e) const { return edges_.at(static_cast<std::size_t>(e)); }

  friend bool operator==(const GraphSpec& a, const GraphSpec& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::pair<int, int>> edges_;
};

/// A scored candidate box for one node. `raw_score` is the unary activation
/// before sigmoid renormalization.
struct Hypothesis {
  HypothesisId id = 0;
  int node = 0;
  Box box;
  double raw_score = 0.0;

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

/// Bit i set means node i is switched on.
struct DetectabilityPattern {
  std::uint32_t mask = 0;

  bool on(int node) const { return (mask >> node) & 1u; }
  int count() const;

  friend auto operator<=>(const DetectabilityPattern&, const DetectabilityPattern&) = default;
};

/// mask - 1. Throws std::invalid_argument for the empty pattern.
int pattern_index(DetectabilityPattern p);

/// Pattern plus one hypothesis id per node; entries of off nodes hold kNoHypothesis.
struct Configuration {
  DetectabilityPattern pattern;
  std::vector<HypothesisId> assignment;

  friend bool operator==(const Configuration&, const Configuration&) = default;
};

struct ScoredConfiguration {
  Configuration config;
  double score = 0.0;
};

/// Canonical ranking: descending score, then ascending pattern mask, then the
/// assigned ids compared lexicographically in node order.
bool ranks_before(const ScoredConfiguration& a, const ScoredConfiguration& b);

/// Per-node hypothesis lists with id lookup. Ids are unique within a node.
class HypothesisSet {
 public:
  HypothesisSet() = default;
  explicit HypothesisSet(int num_nodes);
  HypothesisSet(int num_nodes, std::span<const Hypothesis> hyps);

  int num_nodes() const { return static_cast<int>(by_node_.size()); }
  /// Throws std::invalid_argument on a node out of range or a duplicate id.
  void add(const Hypothesis& h);
  std::span<const Hypothesis> node(int i) const { return by_node_.at(static_cast<std::size_t>(i)); }
  const Hypothesis* find(int node, HypothesisId id) const;
  /// Throws std::out_of_range naming the dangling id.
  const Hypothesis& at(int node, HypothesisId id) const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }

 private:
  std::vector<std::vector<Hypothesis>> by_node_;
  std::vector<std::unordered_map<HypothesisId, std::size_t>> index_;
};

/// Throws std::invalid_argument unless the configuration is consistent with
/// the graph and every assigned id resolves to a hypothesis of that node.
void validate_configuration(const GraphSpec& spec, const Configuration& cfg,
                            const HypothesisSet& hyps);

/// beta = [w, b]: unary weights, 10 pairwise weights per edge ordered
/// [spatial, scale], one bias per non-empty pattern.
struct ModelParams {
  std::vector<double> unary_w;
  std::vector<std::array<double, kPairwiseDim>> pairwise_w;
  std::vector<double> pattern_b;
  double sigmoid_slope = kDefaultSigmoidSlope;

  static ModelParams zeros(const GraphSpec& spec);
  static ModelParams from_flat(const GraphSpec& spec, std::span<const double> flat,
                               double sigmoid_slope = kDefaultSigmoidSlope);

  std::size_t dimension() const;
  std::vector<double> flatten() const;
  /// Throws std::invalid_argument when the layout does not match `spec`.
  void check(const GraphSpec& spec) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

double normalize_unary(double raw, double slope);

std::array<double, kSpatialDim> spatial_features(const Box& bi, const Box& bj);
std::array<double, kScaleDim> scale_features(const Box& bi, const Box& bj);
/// [spatial, scale].
std::array<double, kPairwiseDim> pairwise_features(const Box& bi, const Box& bj);

/// w_i * sigma(raw). Shared by exact scoring and the inference caches so both
/// produce identical floating-point values.
double unary_term(const ModelParams& params, int node, double raw_score);
/// w_ij . psi(bi, bj), accumulated in slot order.
/// w_k * psi_k for each pairwise feature, unsummed.
std::array<double, kPairwiseDim> pairwise_products(const ModelParams& params, int edge, const Box& bi,
                                                   const Box& bj);
double pairwise_term(const ModelParams& params, int edge, const Box& bi, const Box& bj);

struct SparseVector {
  std::size_t dimension = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;  // ascending index

  double dot(std::span<const double> dense) const;
  std::vector<double> to_dense() const;
};

SparseVector feature_vector(const GraphSpec& spec, const Configuration& cfg,
                            const HypothesisSet& hyps,
                            double sigmoid_slope = kDefaultSigmoidSlope);

/// F(z): unary terms in node order, then edge terms in edge order, then the
/// pattern bias.
double score_configuration(const ModelParams& params, const GraphSpec& spec,
                           const Configuration& cfg, const HypothesisSet& hyps);

}  // namespace partswitch
