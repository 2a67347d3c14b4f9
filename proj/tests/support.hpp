#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "partswitch/model.hpp"

namespace partswitch::testing {

/// Expected values frozen by tests/oracles/derive_fixtures.py.
inline const nlohmann::json& derived() {
  static const nlohmann::json j = [] {
    std::ifstream in(std::string(PARTSWITCH_FIXTURE_DIR) + "/derived.json");
    return nlohmann::json::parse(in);
  }();
  return j;
}

inline Box random_box(std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> size(2.0, extent / 2.0);
  const double x = pos(rng);
  const double y = pos(rng);
  return make_box(x, y, x + size(rng), y + size(rng));
}

inline ModelParams random_params(const GraphSpec& spec, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<double> flat(spec.dimension());
  for (double& v : flat) v = n(rng);
  return ModelParams::from_flat(spec, flat);
}

inline GraphSpec graph_of(int k) {
  std::vector<std::string> names{"object", "head", "torso", "legs"};
  names.resize(static_cast<std::size_t>(k));
  return GraphSpec(names);
}

/// Up to `max_per_node` hypotheses per node; ids are unique per node.
inline HypothesisSet random_hypotheses(int k, int max_per_node, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(0, max_per_node);
  std::normal_distribution<double> score(0.0, 1.0);
  HypothesisSet set(k);
  HypothesisId next = 0;
  for (int node = 0; node < k; ++node) {
    const int c = count(rng);
    for (int h = 0; h < c; ++h) set.add({next++, node, random_box(rng), score(rng)});
  }
  return set;
}

/// A random configuration over a non-empty pattern with every on-node populated.
inline Configuration random_configuration(const HypothesisSet& hyps, std::mt19937_64& rng) {
  const int k = hyps.num_nodes();
  std::uniform_int_distribution<std::uint32_t> pick_mask(1u, (1u << k) - 1u);
  for (;;) {
    Configuration cfg;
    cfg.pattern.mask = pick_mask(rng);
    cfg.assignment.assign(static_cast<std::size_t>(k), kNoHypothesis);
    bool ok = true;
    for (int i = 0; i < k && ok; ++i) {
      if (!cfg.pattern.on(i)) continue;
      const auto node = hyps.node(i);
      if (node.empty()) {
        ok = false;
        break;
      }
      std::uniform_int_distribution<std::size_t> pick(0, node.size() - 1);
      cfg.assignment[static_cast<std::size_t>(i)] = node[pick(rng)].id;
    }
    if (ok) return cfg;
  }
}

}  // namespace partswitch::testing
