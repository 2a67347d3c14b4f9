#include "partswitch/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace partswitch {

double SceneRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SceneRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SceneRng::normal(double mean, double sigma) {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return mean + sigma * z;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  return mean + sigma * r * std::cos(t);
}

int SceneRng::uniform_int(int lo, int hi) {
  if (hi <= lo) return lo;
  const int span = hi - lo + 1;
  return lo + std::min(span - 1, static_cast<int>(uniform() * span));
}

bool SceneRng::bernoulli(double p) { return uniform() < p; }

namespace {

// Centre and size of each node relative to the holistic box; node 0 is the box itself.
struct Layout {
  double cx, cy, w, h;
};
constexpr std::array<Layout, 4> kCanonical{{
    {0.50, 0.50, 1.00, 1.00},  // holistic
    {0.80, 0.25, 0.30, 0.35},  // head
    {0.45, 0.45, 0.60, 0.40},  // torso
    {0.45, 0.80, 0.65, 0.40},  // legs
}};

Box box_from_center(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace

void SynthConfig::check() const {
  if (images < 0) throw std::invalid_argument("images must be non-negative");
  if (min_objects < 0 || max_objects < min_objects) throw std::invalid_argument("bad object count bounds");
  if (!(min_object_size > 0.0) || max_object_size < min_object_size) {
    throw std::invalid_argument("bad object size bounds");
  }
  if (!(image_width > 0.0) || !(image_height > 0.0)) throw std::invalid_argument("bad image size");
  for (double s : {part_offset_sigma, part_scale_sigma, hypothesis_jitter_sigma, score_noise_sigma,
                   background_score_sigma}) {
    if (!(s >= 0.0)) throw std::invalid_argument("sigmas must be non-negative");
  }
  for (double r : {negative_fraction, occlusion_rate, deformation_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("rates must lie in [0, 1]");
  }
  if (distractors_per_node < 0) throw std::invalid_argument("distractors_per_node must be non-negative");
  if (node_names.empty() || node_names.size() > kCanonical.size()) {
    throw std::invalid_argument("synthetic scenes support 1 to 4 nodes");
  }
  if (planted_affinity.size() < node_names.size()) {
    throw std::invalid_argument("planted_affinity needs one entry per node");
  }
}

ModelParams planted_params_for(const GraphSpec& spec) {
  if (spec.num_nodes() > static_cast<int>(kCanonical.size())) {
    throw std::invalid_argument("no canonical layout beyond 4 nodes");
  }
  constexpr double kUnary = 2.0;
  constexpr double kSpatial = 4.0;
  constexpr double kScale = 1.0;
  ModelParams p = ModelParams::zeros(spec);
  std::fill(p.unary_w.begin(), p.unary_w.end(), kUnary);
  for (int e = 0; e < spec.num_edges(); ++e) {
    const auto [i, j] = spec.edge(e);
    const Layout& a = kCanonical[static_cast<std::size_t>(i)];
    const Layout& b = kCanonical[static_cast<std::size_t>(j)];
    const double mx = (b.cx - a.cx) / (a.w + b.w);
    const double my = (b.cy - a.cy) / (a.h + b.h);
    const double msx = a.w / b.w;
    const double msy = a.h / b.h;
    // -k (d - m)^2 expanded, constants dropped: 2 k m d - k d^2.
    p.pairwise_w[static_cast<std::size_t>(e)] = {2 * kSpatial * mx, 2 * kSpatial * my, -kSpatial, -kSpatial,
                                                 0.0, 2 * kScale * msx, 2 * kScale * msy,
                                                 0.0, -kScale, -kScale};
  }
  return p;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.check();
  SynthDataset ds;
  ds.spec = GraphSpec(cfg.node_names);
  const int k = ds.spec.num_nodes();
  ds.truth.seed = cfg.seed;
  ds.truth.planted_params = cfg.planted_params ? *cfg.planted_params : planted_params_for(ds.spec);
  ds.truth.planted_params.check(ds.spec);

  SceneRng rng(cfg.seed);
  const double log_min = std::log(cfg.min_object_size);
  const double log_max = std::log(cfg.max_object_size);
  auto random_holistic_size = [&] {
    const double w = std::exp(rng.uniform(log_min, log_max));
    return std::pair{w, w * rng.uniform(0.6, 0.9)};
  };

  for (int img = 0; img < cfg.images; ++img) {
    ImageData data;
    char id[32];
    std::snprintf(id, sizeof id, "img%05d", img);
    data.annotation.image_id = id;
    data.annotation.negative = rng.bernoulli(cfg.negative_fraction);
    HypothesisId next_id = 0;
    HypothesisSet img_hyps(k);

    if (!data.annotation.negative) {
      const int count = rng.uniform_int(std::max(1, cfg.min_objects), std::max(1, cfg.max_objects));
      std::vector<Box> placed;
      for (int o = 0; o < count; ++o) {
        Box holistic;
        bool ok = false;
        for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
          const auto [w, h] = random_holistic_size();
          const double x = rng.uniform(0.0, std::max(0.0, cfg.image_width - w));
          const double y = rng.uniform(0.0, std::max(0.0, cfg.image_height - h));
          holistic = {x, y, x + w, y + h};
          ok = std::all_of(placed.begin(), placed.end(),
                           [&](const Box& b) { return intersection_area(b, holistic) == 0.0; });
        }
        if (!ok) continue;
        placed.push_back(holistic);

        PlantedObject planted;
        planted.image_id = data.annotation.image_id;
        planted.object_index = static_cast<int>(data.annotation.objects.size());
        planted.deformed = rng.bernoulli(cfg.deformation_rate);
        planted.lowres = holistic.area() < cfg.lowres_area_threshold;
        planted.planted_config.assignment.assign(static_cast<std::size_t>(k), kNoHypothesis);

        ObjectAnnotation obj;
        obj.class_name = cfg.class_name;
        obj.box = holistic;
        std::vector<std::optional<Box>> truth_boxes(static_cast<std::size_t>(k));
        truth_boxes[0] = holistic;
        const double offset_sigma =
            cfg.part_offset_sigma * (planted.deformed ? cfg.deformation_offset_scale : 1.0);
        for (int i = 1; i < k; ++i) {
          const Layout& lay = kCanonical[static_cast<std::size_t>(i)];
          const double cx = holistic.x1 + (lay.cx + rng.normal(0.0, offset_sigma)) * holistic.width();
          const double cy = holistic.y1 + (lay.cy + rng.normal(0.0, offset_sigma)) * holistic.height();
          const double pw = lay.w * holistic.width() * std::exp(rng.normal(0.0, cfg.part_scale_sigma));
          const double ph = lay.h * holistic.height() * std::exp(rng.normal(0.0, cfg.part_scale_sigma));
          const bool occluded = rng.bernoulli(cfg.occlusion_rate);
          if (occluded) {
            planted.occluded_mask |= 1u << i;
            obj.parts[ds.spec.node_name(i)] = std::nullopt;
          } else {
            truth_boxes[static_cast<std::size_t>(i)] = box_from_center(cx, cy, pw, ph);
            obj.parts[ds.spec.node_name(i)] = truth_boxes[static_cast<std::size_t>(i)];
          }
        }

        for (int i = 0; i < k; ++i) {
          const auto& gt = truth_boxes[static_cast<std::size_t>(i)];
          if (!gt) continue;
          if (i > 0 && planted.lowres) continue;
          const double jx = rng.normal(0.0, cfg.hypothesis_jitter_sigma);
          const double jy = rng.normal(0.0, cfg.hypothesis_jitter_sigma);
          const double jw = rng.normal(0.0, cfg.hypothesis_jitter_sigma);
          const double jh = rng.normal(0.0, cfg.hypothesis_jitter_sigma);
          const Box box = box_from_center(gt->center_x() + jx * gt->width(),
                                          gt->center_y() + jy * gt->height(),
                                          gt->width() * std::exp(jw), gt->height() * std::exp(jh));
          const double magnitude = std::sqrt(jx * jx + jy * jy + jw * jw + jh * jh);
          double raw = cfg.planted_affinity[static_cast<std::size_t>(i)] -
                       cfg.jitter_score_penalty * magnitude +
                       rng.normal(0.0, cfg.score_noise_sigma);
          if (i == 0 && planted.deformed) raw -= cfg.deformation_score_drop;
          // All noise sigmas at zero reproduce the ground-truth box exactly.
          const Box emitted = (jx == 0.0 && jy == 0.0 && jw == 0.0 && jh == 0.0) ? *gt : box;
          Hypothesis h{next_id++, i, emitted, raw};
          data.candidates.push_back(h);
          img_hyps.add(h);
          if (iou(emitted, *gt) >= 0.4) {
            planted.planted_mask |= 1u << i;
            planted.planted_config.assignment[static_cast<std::size_t>(i)] = h.id;
          }
        }
        planted.planted_config.pattern.mask = planted.planted_mask;
        if (planted.planted_mask != 0) {
          planted.planted_score = score_configuration(ds.truth.planted_params, ds.spec,
                                                      planted.planted_config, img_hyps);
        }
        data.annotation.objects.push_back(std::move(obj));
        ds.truth.objects.push_back(std::move(planted));
      }
    }

    for (int i = 0; i < k; ++i) {
      const Layout& lay = kCanonical[static_cast<std::size_t>(i)];
      for (int d = 0; d < cfg.distractors_per_node; ++d) {
        const auto [hw, hh] = random_holistic_size();
        const double w = lay.w * hw;
        const double h = lay.h * hh;
        const double x = rng.uniform(0.0, std::max(0.0, cfg.image_width - w));
        const double y = rng.uniform(0.0, std::max(0.0, cfg.image_height - h));
        const double raw = rng.normal(cfg.background_score_mean, cfg.background_score_sigma);
        Hypothesis hyp{next_id++, i, Box{x, y, x + w, y + h}, raw};
        data.candidates.push_back(hyp);
      }
    }
    ds.images.push_back(std::move(data));
  }
  return ds;
}

std::optional<ScoredConfiguration> brute_force_best(const HypothesisSet& hyps,
                                                    const ModelParams& params,
                                                    const GraphSpec& spec,
                                                    const DetectConfig& cfg) {
  constexpr std::uint64_t kGuard = 10'000'000;
  if (count_configurations(hyps, cfg) > kGuard) {
    throw std::length_error("brute force search space exceeds 10^7 configurations");
  }
  const int k = spec.num_nodes();
  std::optional<ScoredConfiguration> best;
  for (std::uint32_t mask = 1; mask <= spec.full_mask(); ++mask) {
    if (!cfg.allows(mask)) continue;
    Configuration c;
    c.pattern.mask = mask;
    c.assignment.assign(static_cast<std::size_t>(k), kNoHypothesis);
    // Depth-first over the nodes; off nodes pass straight through.
    auto visit = [&](auto&& self, int node) -> void {
      if (node == k) {
        ScoredConfiguration sc{c, score_configuration(params, spec, c, hyps)};
        if (!best || ranks_before(sc, *best)) best = std::move(sc);
        return;
      }
      if (!c.pattern.on(node)) {
        self(self, node + 1);
        return;
      }
      for (const auto& h : hyps.node(node)) {
        c.assignment[static_cast<std::size_t>(node)] = h.id;
        self(self, node + 1);
      }
      c.assignment[static_cast<std::size_t>(node)] = kNoHypothesis;
    };
    visit(visit, 0);
  }
  return best;
}

}  // namespace partswitch
