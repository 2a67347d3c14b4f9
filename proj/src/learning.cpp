#include "partswitch/learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include <Eigen/Dense>

namespace partswitch {

void TrainConfig::check() const {
  if (!(C > 0.0)) throw std::invalid_argument("C must be positive");
  if (!(detect_iou > 0.0 && detect_iou < 1.0)) throw std::invalid_argument("detect_iou must lie in (0, 1)");
  if (mining_rounds < 1) throw std::invalid_argument("mining_rounds must be at least 1");
  if (negatives_per_image < 1) throw std::invalid_argument("negatives_per_image must be at least 1");
  if (!(solver_tolerance > 0.0)) throw std::invalid_argument("solver_tolerance must be positive");
}

std::optional<Configuration> assign_switch_labels(const NodeBoxes& gt, const HypothesisSet& hyps,
                                                  double detect_iou) {
  if (gt.empty() || !gt[0]) throw std::invalid_argument("ground-truth object lacks a holistic box");
  const int k = hyps.num_nodes();
  Configuration cfg;
  cfg.assignment.assign(static_cast<std::size_t>(k), kNoHypothesis);
  for (int i = 0; i < k && static_cast<std::size_t>(i) < gt.size(); ++i) {
    const auto& box = gt[static_cast<std::size_t>(i)];
    if (!box) continue;
    const Hypothesis* best = nullptr;
    for (const auto& h : hyps.node(i)) {
      if (iou(h.box, *box) < detect_iou) continue;
      if (best == nullptr || h.raw_score > best->raw_score ||
          (h.raw_score == best->raw_score && h.id < best->id)) {
        best = &h;
      }
    }
    if (best != nullptr) {
      cfg.pattern.mask |= 1u << i;
      cfg.assignment[static_cast<std::size_t>(i)] = best->id;
    }
  }
  if (cfg.pattern.mask == 0) return std::nullopt;
  return cfg;
}

std::vector<LabeledExample> mine_hard_negatives(const ModelParams& params, const GraphSpec& spec,
                                                std::span<const NegativeImage> images,
                                                const TrainConfig& cfg) {
  DetectConfig dc;
  dc.score_threshold = std::nextafter(-1.0, 0.0);
  dc.max_raw_detections = static_cast<std::size_t>(cfg.negatives_per_image);
  dc.allowed_patterns = cfg.allowed_patterns;
  std::vector<LabeledExample> out;
  for (const auto& img : images) {
    for (auto& sc : detect(img.hyps, params, spec, dc)) {
      LabeledExample ex;
      ex.phi = feature_vector(spec, sc.config, img.hyps, params.sigmoid_slope);
      ex.sign = -1;
      ex.image_id = img.image_id;
      ex.config = std::move(sc.config);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

double primal_objective(std::span<const double> weights, std::span<const LabeledExample> examples,
                        double C) {
  double reg = 0.0;
  for (double w : weights) reg += w * w;
  double loss = 0.0;
  for (const auto& ex : examples) {
    loss += std::max(0.0, 1.0 - ex.sign * ex.phi.dot(weights));
  }
  return 0.5 * reg + C * loss;
}

MaxMarginSolution solve_max_margin(std::span<const LabeledExample> examples, double C, double tol,
                                   std::size_t max_iterations) {
  if (!(C > 0.0)) throw std::invalid_argument("C must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (examples.empty()) throw std::invalid_argument("no training examples");
  const std::size_t dim = examples.front().phi.dimension;
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& ex : examples) {
    if (ex.phi.dimension != dim) throw std::invalid_argument("examples differ in dimension");
    if (ex.sign == 1) has_pos = true;
    else if (ex.sign == -1) has_neg = true;
    else throw std::invalid_argument("example sign must be +1 or -1");
    for (const auto& [idx, v] : ex.phi.entries) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value in " + ex.image_id);
      if (idx >= dim) throw std::invalid_argument("feature index out of range");
    }
  }
  if (!has_pos) throw std::invalid_argument("no positive examples");
  if (!has_neg) throw std::invalid_argument("no negative examples");

  const std::size_t n = examples.size();
  const Eigen::Index rows = static_cast<Eigen::Index>(n);
  const Eigen::Index cols = static_cast<Eigen::Index>(dim);
  // Z holds y_i * phi_i as rows; the dual Hessian is Z Z^T.
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [idx, v] : examples[i].phi.entries) {
      Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx)) += examples[i].sign * v;
    }
  }

  // Dual: min 1/2 a^T Z Z^T a - sum(a), 0 <= a <= C, with multipliers s (a >= 0)
  // and t (a <= C). Iterates stay strictly inside the box, so every one of them
  // is dual feasible and P(Z^T a) - D(a) is a valid gap.
  Eigen::VectorXd a = Eigen::VectorXd::Constant(rows, 0.5 * C);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(rows);
  Eigen::VectorXd t = Eigen::VectorXd::Ones(rows);

  auto primal_at = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd margins = Z * w;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) loss += std::max(0.0, 1.0 - margins(i));
    return 0.5 * w.squaredNorm() + C * loss;
  };

  MaxMarginSolution sol;
  Eigen::VectorXd best_w = Eigen::VectorXd::Zero(cols);
  double best_gap = std::numeric_limits<double>::infinity();
  const double nd = static_cast<double>(n);

  auto consider = [&](const Eigen::VectorXd& alpha) {
    const Eigen::VectorXd w = Z.transpose() * alpha;
    const double primal = primal_at(w);
    const double dual = alpha.sum() - 0.5 * w.squaredNorm();
    if (primal - dual < best_gap) {
      best_gap = primal - dual;
      best_w = w;
      sol.objective = primal;
      sol.dual_objective = dual;
    }
  };

  // Guesses the active set from the complementarity pairs and solves the free
  // block exactly. The interior iterates stall a few digits short when the
  // features are badly scaled; this recovers the rest.
  auto polish = [&] {
    std::vector<Eigen::Index> free;
    Eigen::VectorXd fixed = Eigen::VectorXd::Zero(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (a(i) <= s(i)) continue;
      if (C - a(i) <= t(i)) fixed(i) = C;
      else free.push_back(i);
    }
    const Eigen::VectorXd w0 = Z.transpose() * fixed;
    Eigen::VectorXd alpha = fixed;
    if (!free.empty()) {
      const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd zf(nf, cols);
      for (Eigen::Index k = 0; k < nf; ++k) zf.row(k) = Z.row(free[static_cast<std::size_t>(k)]);
      const Eigen::VectorXd rhs = Eigen::VectorXd::Ones(nf) - zf * w0;
      const Eigen::VectorXd af = (zf * zf.transpose()).completeOrthogonalDecomposition().solve(rhs);
      for (Eigen::Index k = 0; k < nf; ++k) {
        if (!(af(k) >= 0.0 && af(k) <= C)) return;
        alpha(free[static_cast<std::size_t>(k)]) = af(k);
      }
    }
    consider(alpha);
  };

  for (std::size_t iter = 1; iter <= max_iterations; ++iter) {
    consider(a);
    sol.iterations = iter - 1;
    if (best_gap > tol && best_gap < 1e-2 * (1.0 + std::abs(sol.objective))) polish();
    if (best_gap <= tol) {
      sol.converged = true;
      break;
    }
    const Eigen::VectorXd w = Z.transpose() * a;

    const Eigen::ArrayXd slack = (C - a.array());
    const Eigen::VectorXd rd = Z * w - Eigen::VectorXd::Ones(rows) - s + t;
    const double mu = (a.dot(s) + slack.matrix().dot(t)) / (2.0 * nd);
    if (!(mu > 1e-15 * std::max(1.0, C))) break;
    const Eigen::ArrayXd dinv = 1.0 / (s.array() / a.array() + t.array() / slack);

    Eigen::LDLT<Eigen::MatrixXd> reduced(Eigen::MatrixXd::Identity(cols, cols) +
                                         Z.transpose() * dinv.matrix().asDiagonal() * Z);
    if (reduced.info() != Eigen::Success) break;

    // Solves (D + Z Z^T) x = r via Woodbury and recovers ds, dt from x.
    auto newton = [&](const Eigen::ArrayXd& rs, const Eigen::ArrayXd& rt, Eigen::VectorXd& da,
                      Eigen::VectorXd& ds, Eigen::VectorXd& dt) {
      const Eigen::VectorXd r = (-rd.array() + rs / a.array() - rt / slack).matrix();
      const Eigen::VectorXd dr = (dinv * r.array()).matrix();
      const Eigen::VectorXd y = reduced.solve(Z.transpose() * dr);
      da = dr - (dinv * (Z * y).array()).matrix();
      ds = ((rs - s.array() * da.array()) / a.array()).matrix();
      dt = ((rt + t.array() * da.array()) / slack).matrix();
    };
    auto max_step = [&](const Eigen::VectorXd& da, const Eigen::VectorXd& ds,
                        const Eigen::VectorXd& dt) {
      double step = 1.0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (da(i) < 0.0) step = std::min(step, -a(i) / da(i));
        if (da(i) > 0.0) step = std::min(step, slack(i) / da(i));
        if (ds(i) < 0.0) step = std::min(step, -s(i) / ds(i));
        if (dt(i) < 0.0) step = std::min(step, -t(i) / dt(i));
      }
      return step;
    };

    Eigen::VectorXd da;
    Eigen::VectorXd ds;
    Eigen::VectorXd dt;
    newton(-(a.array() * s.array()), -(slack * t.array()), da, ds, dt);
    const double step_aff = max_step(da, ds, dt);
    const double mu_aff = ((a + step_aff * da).dot(s + step_aff * ds) +
                           (slack.matrix() - step_aff * da).dot(t + step_aff * dt)) /
                          (2.0 * nd);
    const double sigma = std::min(1.0, std::pow(mu_aff / mu, 3.0));

    // Mehrotra corrector with the second-order terms from the affine step.
    const Eigen::ArrayXd rs = sigma * mu - a.array() * s.array() - da.array() * ds.array();
    const Eigen::ArrayXd rt = sigma * mu - slack * t.array() + da.array() * dt.array();
    newton(rs, rt, da, ds, dt);
    const double step = std::min(1.0, 0.995 * max_step(da, ds, dt));
    a += step * da;
    s += step * ds;
    t += step * dt;
    sol.iterations = iter;
  }
  if (!sol.converged) {
    polish();
    sol.converged = best_gap <= tol;
  }
  sol.weights.assign(best_w.data(), best_w.data() + best_w.size());
  return sol;
}

namespace {

using ExampleKey = std::tuple<std::string, std::uint32_t, std::vector<HypothesisId>>;

ExampleKey key_of(const LabeledExample& ex) {
  return {ex.image_id, ex.config.pattern.mask, ex.config.assignment};
}

ModelParams bootstrap_params(const GraphSpec& spec, double slope) {
  ModelParams p = ModelParams::zeros(spec);
  p.sigmoid_slope = slope;
  std::fill(p.unary_w.begin(), p.unary_w.end(), 1.0);
  return p;
}

bool allowed(const TrainConfig& cfg, std::uint32_t mask) {
  return cfg.allowed_patterns.empty() ||
         std::find(cfg.allowed_patterns.begin(), cfg.allowed_patterns.end(), mask) !=
             cfg.allowed_patterns.end();
}

}  // namespace

TrainResult train(const GraphSpec& spec, std::span<const PositiveImage> positives,
                  std::span<const NegativeImage> negatives, const TrainConfig& cfg,
                  double sigmoid_slope) {
  cfg.check();
  TrainResult result;

  std::size_t total_objects = 0;
  for (const auto& img : positives) {
    for (const auto& gt : img.objects) {
      ++total_objects;
      auto labeled = assign_switch_labels(gt, img.hyps, cfg.detect_iou);
      if (!labeled) {
        ++result.rejected_positives;
        continue;
      }
      if (!allowed(cfg, labeled->pattern.mask)) {
        ++result.disallowed_positives;
        continue;
      }
      LabeledExample ex;
      ex.phi = feature_vector(spec, *labeled, img.hyps, sigmoid_slope);
      ex.sign = 1;
      ex.image_id = img.image_id;
      ex.config = std::move(*labeled);
      result.positives.push_back(std::move(ex));
    }
  }
  if (result.positives.empty()) {
    throw std::runtime_error("no usable positive examples: " + std::to_string(total_objects) +
                             " objects, " + std::to_string(result.rejected_positives) +
                             " rejected (no node detected), " +
                             std::to_string(result.disallowed_positives) +
                             " outside the allowed patterns");
  }

  std::set<ExampleKey> seen;
  auto append_new = [&](std::vector<LabeledExample> mined) {
    std::size_t added = 0;
    for (auto& ex : mined) {
      if (!seen.insert(key_of(ex)).second) continue;
      result.negatives.push_back(std::move(ex));
      ++added;
    }
    return added;
  };
  append_new(mine_hard_negatives(bootstrap_params(spec, sigmoid_slope), spec, negatives, cfg));

  std::vector<LabeledExample> all;
  for (int round = 1; round <= cfg.mining_rounds; ++round) {
    all.clear();
    all.insert(all.end(), result.positives.begin(), result.positives.end());
    all.insert(all.end(), result.negatives.begin(), result.negatives.end());
    const auto sol = solve_max_margin(all, cfg.C, cfg.solver_tolerance, cfg.max_solver_iterations);
    result.params = ModelParams::from_flat(spec, sol.weights, sigmoid_slope);

    RoundRecord rec;
    rec.round = round;
    rec.objective = sol.objective;
    rec.duality_gap = sol.objective - sol.dual_objective;
    rec.examples = all.size();
    rec.positives = result.positives.size();
    rec.negatives = result.negatives.size();
    rec.weights = sol.weights;

    auto mined = mine_hard_negatives(result.params, spec, negatives, cfg);
    std::erase_if(mined, [&](const LabeledExample& ex) { return seen.count(key_of(ex)) > 0; });
    rec.new_negatives = mined.size();
    result.rounds.push_back(std::move(rec));
    // The last round reports outstanding violators without another solve.
    if (mined.empty() || round == cfg.mining_rounds) break;
    append_new(std::move(mined));
  }
  return result;
}

}  // namespace partswitch
