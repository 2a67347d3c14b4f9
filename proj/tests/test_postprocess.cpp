#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "partswitch/postprocess.hpp"
#include "support.hpp"

using namespace partswitch;
using namespace partswitch::testing;

namespace {

// A planted affine map from two part boxes to an enclosing box. Widths stay
// positive: x2 - x1 = 0.5 wa + 0.25 wb + 4.
Box planted_target(const Box& a, const Box& b) {
  return Box{0.5 * a.x1 + 0.3 * b.x1 + 0.05 * b.x2 - 2.0, 0.6 * a.y1 + 0.2 * b.y1 + 0.1 * a.y2 - 3.0,
             0.5 * a.x2 + 0.3 * b.x2 + 0.05 * b.x1 + 2.0, 0.6 * a.y2 + 0.2 * b.y2 + 0.1 * a.y1 + 3.0};
}

double max_corner_error(const Box& a, const Box& b) {
  return std::max({std::abs(a.x1 - b.x1), std::abs(a.y1 - b.y1), std::abs(a.x2 - b.x2), std::abs(a.y2 - b.y2)});
}

std::vector<RegressionSample> random_samples(std::uint32_t mask, std::size_t n, std::mt19937_64& rng) {
  std::vector<RegressionSample> out;
  const int parts = std::popcount(mask);
  for (std::size_t s = 0; s < n; ++s) {
    RegressionSample r;
    r.pattern.mask = mask;
    for (int p = 0; p < parts; ++p) r.part_boxes.push_back(random_box(rng, 300.0));
    r.target = union_box(r.part_boxes);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_CASE("least squares recovers a planted affine map") {
  std::mt19937_64 rng(3);
  std::vector<RegressionSample> train;
  for (int s = 0; s < 40; ++s) {
    const Box a = random_box(rng, 300.0);
    const Box b = random_box(rng, 300.0);
    train.push_back({{0b0110}, {a, b}, planted_target(a, b)});
  }
  const auto regs = fit_box_regressors(train);
  REQUIRE(regs.count(0b0110));
  const BoxRegressor& reg = regs.at(0b0110);
  CHECK_FALSE(reg.fallback);
  CHECK(reg.trained_on == 40);
  CHECK(reg.weights.size() == 4 * 9);
  double worst = 0.0;
  for (int s = 0; s < 200; ++s) {
    const Box a = random_box(rng, 300.0);
    const Box b = random_box(rng, 300.0);
    const std::vector<Box> parts{a, b};
    worst = std::max(worst, max_corner_error(reg.predict(parts), planted_target(a, b)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("fallback triggers exactly below 4n+1 samples") {
  std::mt19937_64 rng(4);
  for (std::uint32_t mask : {0b0010u, 0b0110u, 0b1110u}) {
    const std::size_t need = 4 * static_cast<std::size_t>(std::popcount(mask)) + 1;
    CHECK(fit_box_regressors(random_samples(mask, need - 1, rng)).at(mask).fallback);
    CHECK_FALSE(fit_box_regressors(random_samples(mask, need, rng)).at(mask).fallback);
  }
  CHECK(fit_box_regressors(random_samples(0b0110, 1, rng)).at(0b0110).fallback);
}

TEST_CASE("rank-deficient samples fall back") {
  std::vector<RegressionSample> same;
  for (int s = 0; s < 20; ++s) same.push_back({{0b0010}, {make_box(0, 0, 5, 5)}, make_box(0, 0, 9, 9)});
  CHECK(fit_box_regressors(same).at(0b0010).fallback);
}

TEST_CASE("single part mapped onto itself gives the identity") {
  std::mt19937_64 rng(5);
  std::vector<RegressionSample> train;
  for (int s = 0; s < 30; ++s) {
    const Box b = random_box(rng, 300.0);
    train.push_back({{0b0100}, {b}, b});
  }
  const BoxRegressor reg = fit_box_regressors(train).at(0b0100);
  for (int s = 0; s < 50; ++s) {
    const std::vector<Box> b{random_box(rng, 300.0)};
    CHECK(max_corner_error(reg.predict(b), b[0]) <= 1e-9);
  }
}

TEST_CASE("holistic-on samples are ignored") {
  std::mt19937_64 rng(6);
  CHECK(fit_box_regressors(random_samples(0b0011, 50, rng)).empty());
}

TEST_CASE("regression samples cover every non-empty subset of annotated parts") {
  const GraphSpec spec = graph_of(4);
  const std::vector<NodeBoxes> objects{
      {make_box(0, 0, 100, 100), make_box(0, 0, 10, 10), std::nullopt, make_box(20, 20, 40, 40)}};
  const auto samples = regression_samples(spec, objects);
  std::set<std::uint32_t> masks;
  for (const auto& s : samples) {
    masks.insert(s.pattern.mask);
    CHECK(s.target == make_box(0, 0, 100, 100));
    CHECK_FALSE(s.pattern.on(0));
  }
  CHECK(masks == std::set<std::uint32_t>{0b0010, 0b1000, 0b1010});
}

TEST_CASE("box generation") {
  HypothesisSet hyps(3);
  hyps.add({0, 0, make_box(0, 0, 50, 60), 1.0});
  hyps.add({1, 1, make_box(10, 10, 20, 20), 1.0});
  hyps.add({2, 2, make_box(30, 5, 45, 25), 1.0});
  BoxRegressors regs;

  SUBCASE("holistic on uses the holistic hypothesis box") {
    const Configuration cfg{{0b011}, {0, 1, kNoHypothesis}};
    CHECK(generate_box(regs, cfg, hyps) == make_box(0, 0, 50, 60));
  }
  SUBCASE("missing regressor falls back to the union") {
    const Configuration cfg{{0b110}, {kNoHypothesis, 1, 2}};
    CHECK(generate_box(regs, cfg, hyps) == make_box(10, 5, 45, 25));
  }
  SUBCASE("fallback regressor gives the union") {
    regs[0b110] = BoxRegressor{{0b110}, {}, 1, true};
    const Configuration cfg{{0b110}, {kNoHypothesis, 1, 2}};
    CHECK(generate_box(regs, cfg, hyps) == make_box(10, 5, 45, 25));
  }
  SUBCASE("fitted regressor output is ordered") {
    BoxRegressor flip{{0b010}, std::vector<double>(20, 0.0), 9, false};
    // Maps to (x2, y2, x1, y1) of the part.
    flip.weights[0 * 5 + 2] = 1.0;
    flip.weights[1 * 5 + 3] = 1.0;
    flip.weights[2 * 5 + 0] = 1.0;
    flip.weights[3 * 5 + 1] = 1.0;
    regs[0b010] = flip;
    const Configuration cfg{{0b010}, {kNoHypothesis, 1, kNoHypothesis}};
    const Box b = generate_box(regs, cfg, hyps);
    CHECK(b == make_box(10, 10, 20, 20));
  }
}

TEST_CASE("part nms suppresses detections sharing a hypothesis") {
  const ScoredConfiguration d1{{{0b011}, {1, 2, kNoHypothesis}}, 0.9};
  const ScoredConfiguration d2{{{0b110}, {kNoHypothesis, 2, 3}}, 0.8};
  const ScoredConfiguration d3{{{0b001}, {4, kNoHypothesis, kNoHypothesis}}, 0.7};
  const auto kept = part_nms({d3, d2, d1});
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].config == d1.config);
  CHECK(kept[1].config == d3.config);

  SUBCASE("disjoint detections pass through") {
    const auto all = part_nms({d1, d3});
    CHECK(all.size() == 2);
  }
  SUBCASE("identical hypothesis sets keep the stronger") {
    ScoredConfiguration weaker = d1;
    weaker.score = 0.1;
    const auto one = part_nms({weaker, d1});
    REQUIRE(one.size() == 1);
    CHECK(one[0].score == 0.9);
  }
  SUBCASE("same id on different nodes is not shared") {
    const ScoredConfiguration a{{{0b001}, {5, kNoHypothesis, kNoHypothesis}}, 0.5};
    const ScoredConfiguration b{{{0b010}, {kNoHypothesis, 5, kNoHypothesis}}, 0.4};
    CHECK(part_nms({a, b}).size() == 2);
  }
}

TEST_CASE("part nms is idempotent and keeps a disjoint subsequence") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<HypothesisId> id(0, 4);
  std::uniform_real_distribution<double> score(-1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredConfiguration> dets;
    for (int d = 0; d < 12; ++d) {
      ScoredConfiguration sc;
      sc.config.pattern.mask = 1 + static_cast<std::uint32_t>(rng() % 7);
      sc.config.assignment.assign(3, kNoHypothesis);
      for (int i = 0; i < 3; ++i) {
        if (sc.config.pattern.on(i)) sc.config.assignment[static_cast<std::size_t>(i)] = id(rng);
      }
      sc.score = score(rng);
      dets.push_back(sc);
    }
    const auto once = part_nms(dets);
    const auto twice = part_nms(once);
    REQUIRE(once.size() == twice.size());
    std::set<std::pair<int, HypothesisId>> used;
    for (std::size_t k = 0; k < once.size(); ++k) {
      CHECK(once[k].config == twice[k].config);
      if (k > 0) CHECK(ranks_before(once[k - 1], once[k]));
      for (int i = 0; i < 3; ++i) {
        const HypothesisId h = once[k].config.assignment[static_cast<std::size_t>(i)];
        if (h != kNoHypothesis) CHECK(used.insert({i, h}).second);
      }
    }
  }
}
