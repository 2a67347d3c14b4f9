#include <cmath>
#include <random>

#include "doctest.h"
#include "partswitch/inference.hpp"
#include "partswitch/synthetic.hpp"
#include "support.hpp"

using namespace partswitch;
using namespace partswitch::testing;

namespace {

bool same_ranking(const std::vector<ScoredConfiguration>& a, const std::vector<ScoredConfiguration>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].config == b[i].config) || a[i].score != b[i].score) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("pruning") {
  PruneConfig cfg;
  SUBCASE("empty input") {
    const auto out = prune_hypotheses({}, 3, cfg);
    CHECK(out.num_nodes() == 3);
    CHECK(out.empty());
  }
  SUBCASE("everything below threshold") {
    cfg.unary_threshold = {1.0};
    const std::vector<Hypothesis> c{{0, 0, make_box(0, 0, 5, 5), 0.2}, {1, 0, make_box(9, 9, 20, 20), 0.9}};
    CHECK(prune_hypotheses(c, 1, cfg).empty());
  }
  SUBCASE("greedy nms keeps the stronger of two overlapping activations") {
    // Two 10x10 boxes shifted by 1 along x: iou = 90 / 110 > 0.8.
    const std::vector<Hypothesis> c{{0, 0, make_box(1, 0, 11, 10), 0.7}, {1, 0, make_box(0, 0, 10, 10), 0.9}};
    REQUIRE(iou(c[0].box, c[1].box) > 0.8);
    const auto out = prune_hypotheses(c, 1, cfg);
    REQUIRE(out.node(0).size() == 1);
    CHECK(out.node(0)[0].id == 1);
  }
  SUBCASE("per-node cap keeps the strongest") {
    cfg.max_hypotheses = {2};
    std::vector<Hypothesis> c;
    for (int i = 0; i < 5; ++i) c.push_back({i, 0, make_box(20.0 * i, 0, 20.0 * i + 10, 10), 0.1 * i});
    const auto out = prune_hypotheses(c, 1, cfg);
    REQUIRE(out.node(0).size() == 2);
    CHECK(out.node(0)[0].id == 4);
    CHECK(out.node(0)[1].id == 3);
  }
  SUBCASE("zero-size boxes are dropped") {
    const std::vector<Hypothesis> c{{0, 0, make_box(0, 0, 0, 10), 5.0}};
    CHECK(prune_hypotheses(c, 1, cfg).empty());
  }
  SUBCASE("out-of-range node is an error") {
    const std::vector<Hypothesis> c{{0, 3, make_box(0, 0, 1, 1), 0.0}};
    CHECK_THROWS(prune_hypotheses(c, 2, cfg));
  }
}

TEST_CASE("threshold calibration retains the requested share of matched activations") {
  std::vector<Hypothesis> cands;
  std::vector<std::vector<Box>> gt{{make_box(0, 0, 10, 10)}};
  for (int i = 0; i < 20; ++i) cands.push_back({i, 0, make_box(0, 0, 10, 10), static_cast<double>(i)});
  cands.push_back({99, 0, make_box(50, 50, 60, 60), -100.0});
  const std::vector<CalibrationImage> imgs{{cands, gt}};
  const auto t = calibrate_unary_thresholds(imgs, 2, 0.4, 0.95);
  CHECK(t[0] == 1.0);  // 19 of 20 kept
  CHECK(std::isinf(t[1]));
  CHECK(t[1] < 0);
}

TEST_CASE("empty search space") {
  const GraphSpec spec = graph_of(3);
  const HypothesisSet hyps(3);
  CHECK(detect(hyps, ModelParams::zeros(spec), spec, {}).empty());
  CHECK(count_configurations(hyps) == 0);
}

TEST_CASE("two nodes with two hypotheses each") {
  const GraphSpec spec = graph_of(2);
  HypothesisSet hyps(2);
  hyps.add({0, 0, make_box(0, 0, 10, 10), 0.1});
  hyps.add({1, 0, make_box(5, 5, 15, 15), 0.2});
  hyps.add({2, 1, make_box(1, 1, 4, 4), 0.3});
  hyps.add({3, 1, make_box(6, 1, 9, 4), 0.4});
  const auto want = derived()["configs_two_by_two"].get<std::uint64_t>();
  CHECK(count_configurations(hyps) == want);
  DetectConfig all;
  all.max_raw_detections = 1000;
  std::mt19937_64 rng(1);
  const auto got = detect(hyps, random_params(spec, rng), spec, all);
  CHECK(got.size() == want);
}

TEST_CASE("detect matches brute force on random instances") {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int n = 0; n < 600; ++n) {
    const int k = 1 + static_cast<int>(rng() % 4);
    const GraphSpec spec = graph_of(k);
    const HypothesisSet hyps = random_hypotheses(k, 6, rng);
    const ModelParams p = random_params(spec, rng);
    DetectConfig cfg;
    if (n % 3 == 0) cfg.allowed_patterns = {spec.full_mask(), 1u};
    const auto fast = detect(hyps, p, spec, cfg);
    const auto slow = brute_force_best(hyps, p, spec, cfg);
    REQUIRE(fast.empty() == !slow.has_value());
    if (!slow) continue;
    ++compared;
    CHECK(fast.front().config == slow->config);
    CHECK(std::abs(fast.front().score - slow->score) <= 1e-9);
    // Scores come from the same helpers, so they agree with direct scoring bit for bit.
    CHECK(fast.front().score == score_configuration(p, spec, fast.front().config, hyps));
  }
  CHECK(compared >= 500);
}

TEST_CASE("every returned configuration is scored exactly and ranked") {
  std::mt19937_64 rng(77);
  for (int n = 0; n < 100; ++n) {
    const GraphSpec spec = graph_of(4);
    const HypothesisSet hyps = random_hypotheses(4, 4, rng);
    const ModelParams p = random_params(spec, rng);
    DetectConfig cfg;
    cfg.max_raw_detections = 50;
    const auto out = detect(hyps, p, spec, cfg);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].score == score_configuration(p, spec, out[i].config, hyps));
      if (i > 0) CHECK(ranks_before(out[i - 1], out[i]));
    }
  }
}

TEST_CASE("raising the score threshold or lowering the cap yields a prefix") {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 50; ++n) {
    const GraphSpec spec = graph_of(3);
    const HypothesisSet hyps = random_hypotheses(3, 5, rng);
    const ModelParams p = random_params(spec, rng);
    DetectConfig loose;
    loose.max_raw_detections = 10000;
    const auto all = detect(hyps, p, spec, loose);
    CHECK(all.size() == count_configurations(hyps));

    DetectConfig strict = loose;
    strict.score_threshold = 0.25;
    const auto some = detect(hyps, p, spec, strict);
    REQUIRE(some.size() <= all.size());
    for (std::size_t i = 0; i < some.size(); ++i) {
      CHECK(some[i].score >= 0.25);
      CHECK(some[i].config == all[i].config);
    }
    if (some.size() < all.size()) CHECK(all[some.size()].score < 0.25);

    DetectConfig capped = loose;
    capped.max_raw_detections = 7;
    const auto top = detect(hyps, p, spec, capped);
    CHECK(top.size() == std::min<std::size_t>(7, all.size()));
    for (std::size_t i = 0; i < top.size(); ++i) CHECK(top[i].config == all[i].config);
  }
}

TEST_CASE("allowed patterns restrict the search") {
  std::mt19937_64 rng(8);
  const GraphSpec spec = graph_of(3);
  const HypothesisSet hyps = random_hypotheses(3, 4, rng);
  DetectConfig cfg;
  cfg.allowed_patterns = {0b111};
  cfg.max_raw_detections = 10000;
  for (const auto& sc : detect(hyps, random_params(spec, rng), spec, cfg)) CHECK(sc.config.pattern.mask == 0b111);
}

TEST_CASE("detect is deterministic") {
  std::mt19937_64 rng(6);
  const GraphSpec spec = graph_of(4);
  const HypothesisSet hyps = random_hypotheses(4, 6, rng);
  const ModelParams p = random_params(spec, rng);
  CHECK(same_ranking(detect(hyps, p, spec, {}), detect(hyps, p, spec, {})));
}

TEST_CASE("brute force on tiny spaces") {
  const GraphSpec one = graph_of(1);
  HypothesisSet single(1);
  single.add({4, 0, make_box(0, 0, 2, 2), 0.0});
  const auto best = brute_force_best(single, ModelParams::zeros(one), one);
  REQUIRE(best);
  CHECK(best->config == Configuration{{1}, {4}});
}
