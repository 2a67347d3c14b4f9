#include "partswitch/inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace partswitch {

double PruneConfig::threshold_for(int node) const {
  const auto n = static_cast<std::size_t>(node);
  if (n < unary_threshold.size()) return unary_threshold[n];
  return -std::numeric_limits<double>::infinity();
}

int PruneConfig::cap_for(int node) const {
  const auto n = static_cast<std::size_t>(node);
  if (n < max_hypotheses.size()) return max_hypotheses[n];
  return kDefaultMaxHypotheses;
}

void PruneConfig::check() const {
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw std::invalid_argument("nms_iou must lie in (0, 1)");
  for (int cap : max_hypotheses) {
    if (cap < 1) throw std::invalid_argument("max_hypotheses must be at least 1");
  }
}

bool DetectConfig::allows(std::uint32_t mask) const {
  if (allowed_patterns.empty()) return true;
  return std::find(allowed_patterns.begin(), allowed_patterns.end(), mask) != allowed_patterns.end();
}

HypothesisSet prune_hypotheses(std::span<const Hypothesis> candidates, int num_nodes,
                               const PruneConfig& cfg) {
  cfg.check();
  std::vector<std::vector<Hypothesis>> per_node(static_cast<std::size_t>(num_nodes));
  for (const auto& h : candidates) {
    if (h.node < 0 || h.node >= num_nodes) {
      throw std::invalid_argument("candidate node out of range: " + std::to_string(h.node));
    }
    if (!(h.box.width() > 0.0) || !(h.box.height() > 0.0)) continue;
    if (h.raw_score < cfg.threshold_for(h.node)) continue;
    per_node[static_cast<std::size_t>(h.node)].push_back(h);
  }

  HypothesisSet out(num_nodes);
  for (int node = 0; node < num_nodes; ++node) {
    auto& list = per_node[static_cast<std::size_t>(node)];
    std::sort(list.begin(), list.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
      return a.id < b.id;
    });
    std::vector<const Hypothesis*> kept;
    const auto cap = static_cast<std::size_t>(cfg.cap_for(node));
    for (const auto& h : list) {
      if (kept.size() >= cap) break;
      const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Hypothesis* k) {
        return iou(k->box, h.box) > cfg.nms_iou;
      });
      if (!suppressed) kept.push_back(&h);
    }
    for (const Hypothesis* h : kept) out.add(*h);
  }
  return out;
}

std::vector<double> calibrate_unary_thresholds(std::span<const CalibrationImage> images,
                                               int num_nodes, double match_iou, double retain) {
  if (!(retain > 0.0 && retain <= 1.0)) throw std::invalid_argument("retain must lie in (0, 1]");
  std::vector<std::vector<double>> scores(static_cast<std::size_t>(num_nodes));
  for (const auto& img : images) {
    for (const auto& h : img.candidates) {
      if (h.node < 0 || h.node >= num_nodes) continue;
      const auto n = static_cast<std::size_t>(h.node);
      if (n >= img.gt_boxes.size()) continue;
      const bool matches = std::any_of(img.gt_boxes[n].begin(), img.gt_boxes[n].end(),
                                       [&](const Box& g) { return iou(h.box, g) >= match_iou; });
      if (matches) scores[n].push_back(h.raw_score);
    }
  }
  std::vector<double> thresholds(static_cast<std::size_t>(num_nodes),
                                 -std::numeric_limits<double>::infinity());
  for (std::size_t n = 0; n < scores.size(); ++n) {
    auto& s = scores[n];
    if (s.empty()) continue;
    std::sort(s.begin(), s.end());
    // Everything from index `drop` upward survives: n - drop >= retain * n.
    const auto drop = static_cast<std::size_t>(std::floor((1.0 - retain) * static_cast<double>(s.size())));
    thresholds[n] = s[std::min(drop, s.size() - 1)];
  }
  return thresholds;
}

std::uint64_t count_configurations(const HypothesisSet& hyps, const DetectConfig& cfg) {
  const int k = hyps.num_nodes();
  std::uint64_t total = 0;
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    if (!cfg.allows(mask)) continue;
    std::uint64_t n = 1;
    for (int i = 0; i < k; ++i) {
      if ((mask >> i) & 1u) n *= hyps.node(i).size();
    }
    total += n;
  }
  return total;
}

namespace {

struct Candidate {
  double score = 0.0;
  std::uint32_t mask = 0;
  std::array<HypothesisId, kMaxNodes> ids{};
  int num_nodes = 0;
};

// Same ordering as ranks_before; off-node slots hold kNoHypothesis in both.
bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.mask != b.mask) return a.mask < b.mask;
  for (int i = 0; i < a.num_nodes; ++i) {
    if (a.ids[static_cast<std::size_t>(i)] != b.ids[static_cast<std::size_t>(i)]) {
      return a.ids[static_cast<std::size_t>(i)] < b.ids[static_cast<std::size_t>(i)];
    }
  }
  return false;
}

struct OnEdge {
  int edge;
  int slot_i;  // positions within the pattern's on-node list
  int slot_j;
};

}  // namespace

std::vector<ScoredConfiguration> detect(const HypothesisSet& hyps, const ModelParams& params,
                                        const GraphSpec& spec, const DetectConfig& cfg) {
  params.check(spec);
  const int k = spec.num_nodes();
  if (hyps.num_nodes() != k) throw std::invalid_argument("hypothesis set node count mismatch");
  if (cfg.max_raw_detections < 1) throw std::invalid_argument("max_raw_detections must be >= 1");

  // Shared caches: one unary term per hypothesis and the weighted pairwise
  // products per hypothesis pair. Products are added one by one below so the
  // totals match score_configuration bit for bit.
  std::vector<std::vector<double>> unary(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    for (const auto& h : hyps.node(i)) unary[static_cast<std::size_t>(i)].push_back(unary_term(params, i, h.raw_score));
  }
  std::vector<std::vector<std::array<double, kPairwiseDim>>> pairwise(static_cast<std::size_t>(spec.num_edges()));
  for (int e = 0; e < spec.num_edges(); ++e) {
    const auto [i, j] = spec.edge(e);
    const auto hi = hyps.node(i);
    const auto hj = hyps.node(j);
    auto& cache = pairwise[static_cast<std::size_t>(e)];
    cache.resize(hi.size() * hj.size());
    for (std::size_t a = 0; a < hi.size(); ++a) {
      for (std::size_t b = 0; b < hj.size(); ++b) {
        cache[a * hj.size() + b] = pairwise_products(params, e, hi[a].box, hj[b].box);
      }
    }
  }

  auto worst_on_top = [](const Candidate& a, const Candidate& b) { return candidate_before(a, b); };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worst_on_top)> kept(worst_on_top);

  std::vector<int> on_nodes;
  std::vector<OnEdge> on_edges;
  std::vector<std::size_t> choice;
  for (std::uint32_t mask = 1; mask <= spec.full_mask(); ++mask) {
    if (!cfg.allows(mask)) continue;
    on_nodes.clear();
    on_edges.clear();
    bool feasible = true;
    for (int i = 0; i < k; ++i) {
      if (!((mask >> i) & 1u)) continue;
      if (hyps.node(i).empty()) feasible = false;
      on_nodes.push_back(i);
    }
    if (!feasible) continue;
    for (std::size_t a = 0; a < on_nodes.size(); ++a) {
      for (std::size_t b = a + 1; b < on_nodes.size(); ++b) {
        on_edges.push_back({spec.edge_index(on_nodes[a], on_nodes[b]), static_cast<int>(a),
                            static_cast<int>(b)});
      }
    }
    const double bias = params.pattern_b[mask - 1];
    const std::size_t m = on_nodes.size();
    choice.assign(m, 0);

    while (true) {
      double total = 0.0;
      for (std::size_t s = 0; s < m; ++s) total += unary[static_cast<std::size_t>(on_nodes[s])][choice[s]];
      for (const auto& oe : on_edges) {
        const auto nj = hyps.node(on_nodes[static_cast<std::size_t>(oe.slot_j)]).size();
        const auto& products = pairwise[static_cast<std::size_t>(oe.edge)]
                                       [choice[static_cast<std::size_t>(oe.slot_i)] * nj +
                                        choice[static_cast<std::size_t>(oe.slot_j)]];
        for (double p : products) total += p;
      }
      total += bias;

      if (total >= cfg.score_threshold) {
        Candidate c;
        c.score = total;
        c.mask = mask;
        c.num_nodes = k;
        c.ids.fill(kNoHypothesis);
        for (std::size_t s = 0; s < m; ++s) {
          c.ids[static_cast<std::size_t>(on_nodes[s])] = hyps.node(on_nodes[s])[choice[s]].id;
        }
        if (kept.size() < cfg.max_raw_detections) {
          kept.push(c);
        } else if (candidate_before(c, kept.top())) {
          kept.pop();
          kept.push(c);
        }
      }

      // Mixed-radix increment, last on-node fastest.
      bool exhausted = true;
      for (std::size_t s = m; s-- > 0;) {
        if (++choice[s] < hyps.node(on_nodes[s]).size()) {
          exhausted = false;
          break;
        }
        choice[s] = 0;
      }
      if (exhausted) break;
    }
  }

  std::vector<Candidate> sorted;
  sorted.reserve(kept.size());
  while (!kept.empty()) {
    sorted.push_back(kept.top());
    kept.pop();
  }
  std::sort(sorted.begin(), sorted.end(), candidate_before);

  std::vector<ScoredConfiguration> out;
  out.reserve(sorted.size());
  for (const auto& c : sorted) {
    ScoredConfiguration sc;
    sc.score = c.score;
    sc.config.pattern.mask = c.mask;
    sc.config.assignment.assign(c.ids.begin(), c.ids.begin() + k);
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace partswitch
