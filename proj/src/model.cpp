#include "partswitch/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

namespace partswitch {

GraphSpec::GraphSpec(std::vector<std::string> node_names) : names_(std::move(node_names)) {
  if (names_.empty()) {
    throw std::invalid_argument("graph needs at least one node");
  }
  if (names_.size() > static_cast<std::size_t>(kMaxNodes)) {
    throw std::invalid_argument("graph supports at most " + std::to_string(kMaxNodes) + " nodes");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw std::invalid_argument("empty node name");
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate node name: " + n);
  }
  const int k = num_nodes();
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) edges_.emplace_back(i, j);
  }
}

std::size_t GraphSpec::dimension() const {
  return static_cast<std::size_t>(num_nodes()) +
         static_cast<std::size_t>(kPairwiseDim) * static_cast<std::size_t>(num_edges()) +
         static_cast<std::size_t>(num_patterns());
}

std::size_t GraphSpec::pairwise_offset(int edge) const {
  return static_cast<std::size_t>(num_nodes()) +
         static_cast<std::size_t>(kPairwiseDim) * static_cast<std::size_t>(edge);
}

std::size_t GraphSpec::bias_offset() const { return pairwise_offset(num_edges()); }

int GraphSpec::node_index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw std::out_of_range("unknown node name: " + std::string(name));
}

int GraphSpec::edge_index(int i, int j) const {
  const int k = num_nodes();
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= k || i == j) throw std::out_of_range("invalid edge");
  // Edges before row i: sum_{r<i} (k - 1 - r).
  return i * (2 * k - i - 1) / 2 + (j - i - 1);
}

int DetectabilityPattern::count() const { return std::popcount(mask); }

int pattern_index(DetectabilityPattern p) {
  if (p.mask == 0) throw std::invalid_argument("the all-off pattern has no index");
  return static_cast<int>(p.mask) - 1;
}

bool ranks_before(const ScoredConfiguration& a, const ScoredConfiguration& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.config.pattern.mask != b.config.pattern.mask) {
    return a.config.pattern.mask < b.config.pattern.mask;
  }
  const auto& x = a.config.assignment;
  const auto& y = b.config.assignment;
  const std::size_t n = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!a.config.pattern.on(static_cast<int>(i))) continue;
    if (x[i] != y[i]) return x[i] < y[i];
  }
  return false;
}

HypothesisSet::HypothesisSet(int num_nodes)
    : by_node_(static_cast<std::size_t>(num_nodes)), index_(static_cast<std::size_t>(num_nodes)) {}

HypothesisSet::HypothesisSet(int num_nodes, std::span<const Hypothesis> hyps)
    : HypothesisSet(num_nodes) {
  for (const auto& h : hyps) add(h);
}

void HypothesisSet::add(const Hypothesis& h) {
  if (h.node < 0 || h.node >= num_nodes()) {
    throw std::invalid_argument("hypothesis node out of range: " + std::to_string(h.node));
  }
  if (h.id < 0) throw std::invalid_argument("hypothesis ids must be non-negative");
  if (!h.box.valid()) throw std::invalid_argument("hypothesis box corners out of order");
  auto node = static_cast<std::size_t>(h.node);
  if (!index_[node].emplace(h.id, by_node_[node].size()).second) {
    throw std::invalid_argument("duplicate hypothesis id " + std::to_string(h.id) + " for node " +
                                std::to_string(h.node));
  }
  by_node_[node].push_back(h);
}

const Hypothesis* HypothesisSet::find(int node, HypothesisId id) const {
  if (node < 0 || node >= num_nodes()) return nullptr;
  const auto& idx = index_[static_cast<std::size_t>(node)];
  auto it = idx.find(id);
  if (it == idx.end()) return nullptr;
  return &by_node_[static_cast<std::size_t>(node)][it->second];
}

const Hypothesis& HypothesisSet::at(int node, HypothesisId id) const {
  const Hypothesis* h = find(node, id);
  if (h == nullptr) {
    throw std::out_of_range("dangling hypothesis id " + std::to_string(id) + " for node " +
                            std::to_string(node));
  }
  return *h;
}

std::size_t HypothesisSet::size() const {
  std::size_t n = 0;
  for (const auto& v : by_node_) n += v.size();
  return n;
}

void validate_configuration(const GraphSpec& spec, const Configuration& cfg,
                            const HypothesisSet& hyps) {
  const int k = spec.num_nodes();
  if (cfg.pattern.mask == 0) throw std::invalid_argument("configuration has the all-off pattern");
  if (cfg.pattern.mask > spec.full_mask()) {
    throw std::invalid_argument("pattern mask has bits beyond the graph");
  }
  if (cfg.assignment.size() != static_cast<std::size_t>(k)) {
    throw std::invalid_argument("assignment size does not match node count");
  }
  for (int i = 0; i < k; ++i) {
    const HypothesisId id = cfg.assignment[static_cast<std::size_t>(i)];
    if (cfg.pattern.on(i)) {
      if (id == kNoHypothesis) throw std::invalid_argument("on-node without a hypothesis");
      if (hyps.find(i, id) == nullptr) {
        throw std::invalid_argument("dangling hypothesis id " + std::to_string(id) +
                                    " for node " + spec.node_name(i));
      }
    } else if (id != kNoHypothesis) {
      throw std::invalid_argument("off-node carries a hypothesis");
    }
  }
}

ModelParams ModelParams::zeros(const GraphSpec& spec) {
  ModelParams p;
  p.unary_w.assign(static_cast<std::size_t>(spec.num_nodes()), 0.0);
  p.pairwise_w.assign(static_cast<std::size_t>(spec.num_edges()), {});
  p.pattern_b.assign(static_cast<std::size_t>(spec.num_patterns()), 0.0);
  return p;
}

ModelParams ModelParams::from_flat(const GraphSpec& spec, std::span<const double> flat,
                                   double sigmoid_slope) {
  if (flat.size() != spec.dimension()) {
    throw std::invalid_argument("parameter vector has dimension " + std::to_string(flat.size()) +
                                ", expected " + std::to_string(spec.dimension()));
  }
  ModelParams p = zeros(spec);
  p.sigmoid_slope = sigmoid_slope;
  std::size_t at = 0;
  for (auto& w : p.unary_w) w = flat[at++];
  for (auto& block : p.pairwise_w) {
    for (auto& w : block) w = flat[at++];
  }
  for (auto& b : p.pattern_b) b = flat[at++];
  return p;
}

std::size_t ModelParams::dimension() const {
  return unary_w.size() + kPairwiseDim * pairwise_w.size() + pattern_b.size();
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(dimension());
  flat.insert(flat.end(), unary_w.begin(), unary_w.end());
  for (const auto& block : pairwise_w) flat.insert(flat.end(), block.begin(), block.end());
  flat.insert(flat.end(), pattern_b.begin(), pattern_b.end());
  return flat;
}

void ModelParams::check(const GraphSpec& spec) const {
  if (unary_w.size() != static_cast<std::size_t>(spec.num_nodes()) ||
      pairwise_w.size() != static_cast<std::size_t>(spec.num_edges()) ||
      pattern_b.size() != static_cast<std::size_t>(spec.num_patterns())) {
    throw std::invalid_argument("parameter dimension " + std::to_string(dimension()) +
                                " does not match graph dimension " +
                                std::to_string(spec.dimension()));
  }
  if (!(sigmoid_slope > 0.0) || !std::isfinite(sigmoid_slope)) {
    throw std::invalid_argument("sigmoid slope must be positive and finite");
  }
  for (double v : flatten()) {
    if (!std::isfinite(v)) throw std::invalid_argument("model parameters must be finite");
  }
}

double normalize_unary(double raw, double slope) {
  if (!(slope > 0.0)) throw std::invalid_argument("sigmoid slope must be positive");
  return 1.0 / (1.0 + std::exp(-slope * raw));
}

std::array<double, kSpatialDim> spatial_features(const Box& bi, const Box& bj) {
  const double sx = bi.width() + bj.width();
  const double sy = bi.height() + bj.height();
  if (!(sx > 0.0) || !(sy > 0.0)) {
    throw DegenerateGeometry("spatial features need a positive size sum on both axes");
  }
  const double dx = (bj.center_x() - bi.center_x()) / sx;
  const double dy = (bj.center_y() - bi.center_y()) / sy;
  return {dx, dy, dx * dx, dy * dy};
}

std::array<double, kScaleDim> scale_features(const Box& bi, const Box& bj) {
  if (!(bj.width() > 0.0) || !(bj.height() > 0.0)) {
    throw DegenerateGeometry("scale features need a second box with positive size");
  }
  const double ds = (bi.width() * bi.height()) / (bj.width() * bj.height());
  const double dsx = bi.width() / bj.width();
  const double dsy = bi.height() / bj.height();
  return {ds, dsx, dsy, ds * ds, dsx * dsx, dsy * dsy};
}

std::array<double, kPairwiseDim> pairwise_features(const Box& bi, const Box& bj) {
  const auto sp = spatial_features(bi, bj);
  const auto sc = scale_features(bi, bj);
  std::array<double, kPairwiseDim> out{};
  std::copy(sp.begin(), sp.end(), out.begin());
  std::copy(sc.begin(), sc.end(), out.begin() + kSpatialDim);
  return out;
}

double unary_term(const ModelParams& params, int node, double raw_score) {
  return params.unary_w[static_cast<std::size_t>(node)] *
         normalize_unary(raw_score, params.sigmoid_slope);
}

std::array<double, kPairwiseDim> pairwise_products(const ModelParams& params, int edge, const Box& bi,
                                                   const Box& bj) {
  const auto psi = pairwise_features(bi, bj);
  const auto& w = params.pairwise_w[static_cast<std::size_t>(edge)];
  std::array<double, kPairwiseDim> out{};
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = w[k] * psi[k];
  return out;
}

double pairwise_term(const ModelParams& params, int edge, const Box& bi, const Box& bj) {
  double acc = 0.0;
  for (double p : pairwise_products(params, edge, bi, bj)) acc += p;
  return acc;
}

double SparseVector::dot(std::span<const double> dense) const {
  if (dense.size() != dimension) {
    throw std::invalid_argument("dot product dimension mismatch");
  }
  double acc = 0.0;
  for (const auto& [i, v] : entries) acc += dense[i] * v;
  return acc;
}

std::vector<double> SparseVector::to_dense() const {
  std::vector<double> d(dimension, 0.0);
  for (const auto& [i, v] : entries) d[i] = v;
  return d;
}

SparseVector feature_vector(const GraphSpec& spec, const Configuration& cfg,
                            const HypothesisSet& hyps, double sigmoid_slope) {
  validate_configuration(spec, cfg, hyps);
  const int k = spec.num_nodes();
  SparseVector phi;
  phi.dimension = spec.dimension();
  std::vector<const Hypothesis*> assigned(static_cast<std::size_t>(k), nullptr);
  for (int i = 0; i < k; ++i) {
    if (!cfg.pattern.on(i)) continue;
    assigned[static_cast<std::size_t>(i)] = &hyps.at(i, cfg.assignment[static_cast<std::size_t>(i)]);
    phi.entries.emplace_back(static_cast<std::uint32_t>(i),
                             normalize_unary(assigned[static_cast<std::size_t>(i)]->raw_score,
                                             sigmoid_slope));
  }
  for (int e = 0; e < spec.num_edges(); ++e) {
    const auto [i, j] = spec.edge(e);
    if (!cfg.pattern.on(i) || !cfg.pattern.on(j)) continue;
    const auto psi = pairwise_features(assigned[static_cast<std::size_t>(i)]->box,
                                       assigned[static_cast<std::size_t>(j)]->box);
    const auto offset = static_cast<std::uint32_t>(spec.pairwise_offset(e));
    for (int q = 0; q < kPairwiseDim; ++q) {
      phi.entries.emplace_back(offset + static_cast<std::uint32_t>(q), psi[static_cast<std::size_t>(q)]);
    }
  }
  phi.entries.emplace_back(
      static_cast<std::uint32_t>(spec.bias_offset() + static_cast<std::size_t>(pattern_index(cfg.pattern))),
      1.0);
  return phi;
}

double score_configuration(const ModelParams& params, const GraphSpec& spec,
                           const Configuration& cfg, const HypothesisSet& hyps) {
  params.check(spec);
  validate_configuration(spec, cfg, hyps);
  const int k = spec.num_nodes();
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    if (!cfg.pattern.on(i)) continue;
    total += unary_term(params, i, hyps.at(i, cfg.assignment[static_cast<std::size_t>(i)]).raw_score);
  }
  for (int e = 0; e < spec.num_edges(); ++e) {
    const auto [i, j] = spec.edge(e);
    if (!cfg.pattern.on(i) || !cfg.pattern.on(j)) continue;
    // Term by term, in feature order, so the total is bit-identical to the
    // dot product of the parameters with the feature vector.
    for (double p : pairwise_products(params, e, hyps.at(i, cfg.assignment[static_cast<std::size_t>(i)]).box,
                                      hyps.at(j, cfg.assignment[static_cast<std::size_t>(j)]).box)) {
      total += p;
    }
  }
  total += params.pattern_b[static_cast<std::size_t>(pattern_index(cfg.pattern))];
  return total;
}

}  // namespace partswitch
