#include "partswitch/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace partswitch {

void EvalConfig::check() const {
  for (double t : {ap_iou, pcp_object_iou, pcp_part_iou}) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("evaluation thresholds must lie in (0, 1)");
  }
}

namespace {

std::vector<std::size_t> rank_by_score(std::span<const EvalDetection> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  return order;
}

std::optional<double> percent(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Matching match_detections(std::span<const EvalDetection> detections,
                          std::span<const EvalObject> objects, double iou_thresh) {
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t o = 0; o < objects.size(); ++o) by_image[objects[o].image_id].push_back(o);

  Matching m;
  m.ranked = rank_by_score(detections);
  m.matched_object.assign(detections.size(), std::nullopt);
  std::vector<bool> taken(objects.size(), false);
  std::size_t tp = 0;
  const double num_gt = static_cast<double>(objects.size());
  for (std::size_t r = 0; r < m.ranked.size(); ++r) {
    const std::size_t d = m.ranked[r];
    const auto& det = detections[d];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    if (auto it = by_image.find(det.image_id); it != by_image.end()) {
      for (std::size_t o : it->second) {
        if (taken[o]) continue;
        const double v = iou(det.box, objects[o].box);
        if (v >= iou_thresh && v > best_iou) {
          best_iou = v;
          best = o;
        }
      }
    }
    if (best) {
      taken[*best] = true;
      m.matched_object[d] = best;
      ++tp;
    }
    PrPoint p;
    p.score = det.score;
    p.precision = static_cast<double>(tp) / static_cast<double>(r + 1);
    p.recall = num_gt > 0 ? static_cast<double>(tp) / num_gt : 0.0;
    m.curve.push_back(p);
  }

  if (objects.empty() || m.curve.empty()) return m;
  // Precision envelope, then sum over recall increments.
  std::vector<double> envelope(m.curve.size());
  double running = 0.0;
  for (std::size_t i = m.curve.size(); i-- > 0;) {
    running = std::max(running, m.curve[i].precision);
    envelope[i] = running;
  }
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < m.curve.size(); ++i) {
    m.ap += (m.curve[i].recall - prev_recall) * envelope[i];
    prev_recall = m.curve[i].recall;
  }
  return m;
}

double average_precision(std::span<const EvalDetection> detections,
                         std::span<const EvalObject> objects, double iou_thresh) {
  return match_detections(detections, objects, iou_thresh).ap;
}

std::vector<PartLocalization> pcp_pop(const GraphSpec& spec,
                                      std::span<const EvalDetection> detections,
                                      std::span<const EvalObject> objects,
                                      const EvalConfig& cfg) {
  cfg.check();
  std::map<std::string, std::vector<std::size_t>> dets_by_image;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    dets_by_image[detections[d].image_id].push_back(d);
  }

  // Highest-scoring detection overlapping each object (first in input order on ties).
  std::vector<std::optional<std::size_t>> best(objects.size());
  for (std::size_t o = 0; o < objects.size(); ++o) {
    auto it = dets_by_image.find(objects[o].image_id);
    if (it == dets_by_image.end()) continue;
    for (std::size_t d : it->second) {
      if (iou(detections[d].box, objects[o].box) <= cfg.pcp_object_iou) continue;
      if (!best[o] || detections[d].score > detections[*best[o]].score) best[o] = d;
    }
  }

  std::vector<PartLocalization> out;
  for (int node = 1; node < spec.num_nodes(); ++node) {
    const auto n = static_cast<std::size_t>(node);
    PartLocalization pl;
    pl.node = node;
    pl.part = spec.node_name(node);
    std::size_t pop_den_all = 0;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      const auto& gt_boxes = objects[o].node_boxes;
      const bool has_gt_part = n < gt_boxes.size() && gt_boxes[n].has_value();
      if (has_gt_part) ++pop_den_all;
      if (!best[o]) continue;
      ++pl.matched_objects;
      if (!has_gt_part) continue;
      ++pl.denominator;
      const auto& det_boxes = detections[*best[o]].node_boxes;
      if (n >= det_boxes.size() || !det_boxes[n]) continue;
      ++pl.estimated;
      if (iou(*det_boxes[n], *gt_boxes[n]) > cfg.pcp_part_iou) ++pl.correct;
    }
    pl.pop = percent(pl.estimated, cfg.pop_include_unmatched ? pop_den_all : pl.denominator);
    pl.pcp = percent(pl.correct, pl.denominator);
    pl.pcp_of_estimated = percent(pl.correct, pl.estimated);
    out.push_back(std::move(pl));
  }
  return out;
}

std::vector<SizeClass> size_classes(std::span<const double> areas) {
  const std::size_t n = areas.size();
  for (double a : areas) {
    if (!(a >= 0.0)) throw std::invalid_argument("areas must be non-negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return areas[a] < areas[b]; });
  const std::array<std::size_t, 4> bounds{n * 1 / 10, n * 3 / 10, n * 7 / 10, n * 9 / 10};
  std::vector<SizeClass> out(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    int cls = 0;
    while (cls < 4 && rank >= bounds[static_cast<std::size_t>(cls)]) ++cls;
    out[order[rank]] = static_cast<SizeClass>(cls);
  }
  return out;
}

SizeTable holistic_only_rate_by_size(std::span<const EvalDetection> detections,
                                     std::span<const EvalObject> objects,
                                     double recall_threshold_score, double iou_thresh) {
  std::vector<EvalDetection> kept;
  for (const auto& d : detections) {
    if (d.score >= recall_threshold_score) kept.push_back(d);
  }
  const Matching m = match_detections(kept, objects, iou_thresh);

  std::vector<std::size_t> recalled_obj;
  std::vector<std::uint32_t> recalled_mask;
  for (std::size_t d : m.ranked) {
    if (!m.matched_object[d]) continue;
    recalled_obj.push_back(*m.matched_object[d]);
    recalled_mask.push_back(kept[d].pattern_mask);
  }
  // Canonical object order so the stable size split does not depend on scores.
  std::vector<std::size_t> idx(recalled_obj.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return recalled_obj[a] < recalled_obj[b]; });
  std::vector<double> areas;
  for (std::size_t i : idx) areas.push_back(objects[recalled_obj[i]].box.area());
  const auto classes = size_classes(areas);

  SizeTable t;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto c = static_cast<std::size_t>(classes[k]);
    ++t.recalled[c];
    if (recalled_mask[idx[k]] == 1u) ++t.holistic_only[c];
  }
  for (std::size_t c = 0; c < 5; ++c) t.rate[c] = percent(t.holistic_only[c], t.recalled[c]);
  return t;
}

}  // namespace partswitch
