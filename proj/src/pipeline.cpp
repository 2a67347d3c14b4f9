#include "partswitch/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "partswitch/parallel.hpp"

namespace partswitch {

bool operator==(const TrainedModel& a, const TrainedModel& b) {
  return a.spec == b.spec && a.class_name == b.class_name && a.params == b.params &&
         a.regressors == b.regressors && a.prune.unary_threshold == b.prune.unary_threshold &&
         a.prune.nms_iou == b.prune.nms_iou && a.prune.max_hypotheses == b.prune.max_hypotheses &&
         a.detect.score_threshold == b.detect.score_threshold &&
         a.detect.max_raw_detections == b.detect.max_raw_detections &&
         a.detect.allowed_patterns == b.detect.allowed_patterns;
}

TrainingOutcome train_model(const GraphSpec& spec, std::span<const ImageData> images,
                            const PipelineConfig& cfg, unsigned workers) {
  cfg.train.check();
  const int k = spec.num_nodes();

  std::vector<std::vector<NodeBoxes>> gt(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].annotation.negative) continue;
    for (const auto& obj : images[i].annotation.objects) gt[i].push_back(node_boxes(spec, obj));
  }

  TrainingOutcome out;
  out.model.spec = spec;
  out.model.prune = cfg.prune;
  if (cfg.calibrate_thresholds) {
    std::vector<CalibrationImage> calib;
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].annotation.negative) continue;
      CalibrationImage ci;
      ci.candidates = images[i].candidates;
      ci.gt_boxes.resize(static_cast<std::size_t>(k));
      for (const auto& nb : gt[i]) {
        for (int n = 0; n < k; ++n) {
          if (nb[static_cast<std::size_t>(n)]) ci.gt_boxes[static_cast<std::size_t>(n)].push_back(*nb[static_cast<std::size_t>(n)]);
        }
      }
      calib.push_back(std::move(ci));
    }
    out.model.prune.unary_threshold =
        calibrate_unary_thresholds(calib, k, cfg.train.detect_iou, cfg.calibration_retain);
  }

  std::vector<HypothesisSet> pruned(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    pruned[i] = prune_hypotheses(images[i].candidates, k, out.model.prune);
  });

  std::vector<PositiveImage> positives;
  std::vector<NegativeImage> negatives;
  std::vector<NodeBoxes> all_objects;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& ann = images[i].annotation;
    if (ann.negative) {
      negatives.push_back({ann.image_id, pruned[i]});
    } else {
      positives.push_back({ann.image_id, pruned[i], gt[i]});
      all_objects.insert(all_objects.end(), gt[i].begin(), gt[i].end());
      if (out.model.class_name.empty() && !ann.objects.empty()) {
        out.model.class_name = ann.objects.front().class_name;
      }
    }
  }

  out.result = train(spec, positives, negatives, cfg.train, cfg.sigmoid_slope);
  out.model.params = out.result.params;
  out.model.regressors = fit_box_regressors(regression_samples(spec, all_objects));
  out.model.detect = cfg.detect;
  out.model.detect.allowed_patterns = cfg.train.allowed_patterns;
  return out;
}

std::vector<Detection> detect_image(const TrainedModel& model, const std::string& image_id,
                                    std::span<const Hypothesis> candidates) {
  const int k = model.spec.num_nodes();
  const HypothesisSet hyps = prune_hypotheses(candidates, k, model.prune);
  auto kept = part_nms(detect(hyps, model.params, model.spec, model.detect));
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (auto& sc : kept) {
    Detection d;
    d.image_id = image_id;
    d.box = generate_box(model.regressors, sc.config, hyps);
    d.node_boxes.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      if (sc.config.pattern.on(i)) {
        d.node_boxes[static_cast<std::size_t>(i)] = hyps.at(i, sc.config.assignment[static_cast<std::size_t>(i)]).box;
      }
    }
    d.scored = std::move(sc);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> detect_dataset(const TrainedModel& model, std::span<const ImageData> images,
                                      unsigned workers) {
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return images[a].annotation.image_id < images[b].annotation.image_id;
  });
  std::vector<std::vector<Detection>> per_image(images.size());
  parallel_for(order.size(), workers, [&](std::size_t slot) {
    const auto& img = images[order[slot]];
    per_image[slot] = detect_image(model, img.annotation.image_id, img.candidates);
  });
  std::vector<Detection> out;
  for (auto& v : per_image) {
    std::move(v.begin(), v.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<EvalDetection> to_eval_detections(std::span<const Detection> detections) {
  std::vector<EvalDetection> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    out.push_back({d.image_id, d.scored.score, d.box, d.scored.config.pattern.mask, d.node_boxes});
  }
  return out;
}

std::vector<EvalObject> to_eval_objects(const GraphSpec& spec,
                                        std::span<const ImageAnnotation> annotations,
                                        const std::string& class_name) {
  std::vector<EvalObject> out;
  for (const auto& ann : annotations) {
    if (ann.negative) continue;
    for (const auto& obj : ann.objects) {
      if (!class_name.empty() && obj.class_name != class_name) continue;
      out.push_back({ann.image_id, obj.box, node_boxes(spec, obj)});
    }
  }
  return out;
}

}  // namespace partswitch
