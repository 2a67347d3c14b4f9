#include "partswitch/postprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <stdexcept>
#include <utility>

namespace partswitch {

Box BoxRegressor::predict(std::span<const Box> part_boxes) const {
  if (part_boxes.size() != static_cast<std::size_t>(num_parts())) {
    throw std::invalid_argument("regressor expects " + std::to_string(num_parts()) + " part boxes");
  }
  if (fallback) return union_box(part_boxes);
  const std::size_t c = cols();
  std::vector<double> g;
  g.reserve(c);
  for (const Box& b : part_boxes) {
    g.insert(g.end(), {b.x1, b.y1, b.x2, b.y2});
  }
  g.push_back(1.0);
  std::array<double, 4> out{};
  for (std::size_t r = 0; r < 4; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) acc += weights[r * c + k] * g[k];
    out[r] = acc;
  }
  return ordered(Box{out[0], out[1], out[2], out[3]});
}

BoxRegressors fit_box_regressors(std::span<const RegressionSample> samples) {
  std::map<std::uint32_t, std::vector<const RegressionSample*>> groups;
  for (const auto& s : samples) {
    if (s.pattern.mask == 0 || s.pattern.on(0)) continue;
    if (s.part_boxes.size() != static_cast<std::size_t>(s.pattern.count())) {
      throw std::invalid_argument("regression sample part count does not match its pattern");
    }
    groups[s.pattern.mask].push_back(&s);
  }

  BoxRegressors out;
  for (const auto& [mask, group] : groups) {
    BoxRegressor reg;
    reg.pattern.mask = mask;
    reg.trained_on = group.size();
    const auto c = static_cast<Eigen::Index>(reg.cols());
    const auto m = static_cast<Eigen::Index>(group.size());
    if (m < c) {
      reg.fallback = true;
      out.emplace(mask, std::move(reg));
      continue;
    }
    Eigen::MatrixXd design(m, c);
    Eigen::MatrixXd targets(m, 4);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& s = *group[static_cast<std::size_t>(r)];
      Eigen::Index col = 0;
      for (const Box& b : s.part_boxes) {
        design(r, col++) = b.x1;
        design(r, col++) = b.y1;
        design(r, col++) = b.x2;
        design(r, col++) = b.y2;
      }
      design(r, col) = 1.0;
      targets.row(r) << s.target.x1, s.target.y1, s.target.x2, s.target.y2;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < c) {
      reg.fallback = true;
      out.emplace(mask, std::move(reg));
      continue;
    }
    const Eigen::MatrixXd coef = qr.solve(targets);  // c x 4
    reg.weights.resize(4 * reg.cols());
    for (Eigen::Index r = 0; r < 4; ++r) {
      for (Eigen::Index k = 0; k < c; ++k) {
        reg.weights[static_cast<std::size_t>(r * c + k)] = coef(k, r);
      }
    }
    out.emplace(mask, std::move(reg));
  }
  return out;
}

std::vector<RegressionSample> regression_samples(const GraphSpec& spec,
                                                 std::span<const NodeBoxes> objects) {
  std::vector<RegressionSample> out;
  const int k = spec.num_nodes();
  for (const auto& obj : objects) {
    if (obj.empty() || !obj[0]) continue;
    std::uint32_t annotated = 0;
    for (int i = 1; i < k && static_cast<std::size_t>(i) < obj.size(); ++i) {
      if (obj[static_cast<std::size_t>(i)]) annotated |= 1u << i;
    }
    // Every non-empty subset of the annotated parts.
    for (std::uint32_t sub = annotated; sub != 0; sub = (sub - 1) & annotated) {
      RegressionSample s;
      s.pattern.mask = sub;
      s.target = *obj[0];
      for (int i = 1; i < k; ++i) {
        if ((sub >> i) & 1u) s.part_boxes.push_back(*obj[static_cast<std::size_t>(i)]);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

Box generate_box(const BoxRegressors& regressors, const Configuration& cfg,
                 const HypothesisSet& hyps) {
  if (cfg.pattern.mask == 0) throw std::invalid_argument("cannot generate a box for the all-off pattern");
  if (cfg.pattern.on(0)) return hyps.at(0, cfg.assignment.at(0)).box;
  std::vector<Box> parts;
  for (int i = 1; i < static_cast<int>(cfg.assignment.size()); ++i) {
    if (cfg.pattern.on(i)) parts.push_back(hyps.at(i, cfg.assignment[static_cast<std::size_t>(i)]).box);
  }
  auto it = regressors.find(cfg.pattern.mask);
  if (it == regressors.end()) return union_box(parts);
  return it->second.predict(parts);
}

std::vector<ScoredConfiguration> part_nms(std::vector<ScoredConfiguration> detections) {
  std::stable_sort(detections.begin(), detections.end(), ranks_before);
  std::set<std::pair<int, HypothesisId>> used;
  std::vector<ScoredConfiguration> kept;
  for (auto& d : detections) {
    const auto& a = d.config.assignment;
    bool shared = false;
    for (std::size_t i = 0; i < a.size() && !shared; ++i) {
      if (d.config.pattern.on(static_cast<int>(i)) && used.count({static_cast<int>(i), a[i]})) {
        shared = true;
      }
    }
    if (shared) continue;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (d.config.pattern.on(static_cast<int>(i))) used.insert({static_cast<int>(i), a[i]});
    }
    kept.push_back(std::move(d));
  }
  return kept;
}

}  // namespace partswitch
