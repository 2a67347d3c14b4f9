#include <random>

#include "doctest.h"
#include "partswitch/metrics.hpp"
#include "support.hpp"

using namespace partswitch;
using namespace partswitch::testing;

namespace {

EvalDetection det(const std::string& img, double score, Box box, std::uint32_t mask = 1, NodeBoxes parts = {}) {
  return {img, score, box, mask, std::move(parts)};
}

EvalObject obj(const std::string& img, Box box, NodeBoxes parts = {}) {
  if (parts.empty()) parts = {box};
  return {img, box, std::move(parts)};
}

}  // namespace

TEST_CASE("average precision on the hand case") {
  const std::vector<EvalObject> gts{obj("a", make_box(0, 0, 10, 10)), obj("a", make_box(50, 50, 60, 60))};
  const std::vector<EvalDetection> dets{det("a", 0.9, make_box(0, 0, 10, 10)),
                                        det("a", 0.8, make_box(100, 100, 110, 110)),
                                        det("a", 0.7, make_box(50, 50, 60, 60))};
  const double want = derived()["ap_tp_fp_tp"].get<double>();
  CHECK(std::abs(average_precision(dets, gts, 0.5) - want) <= 1e-6);
  CHECK(std::abs(want - 0.8333) <= 1e-4);

  SUBCASE("input order does not matter") {
    const std::vector<EvalDetection> shuffled{dets[2], dets[0], dets[1]};
    CHECK(average_precision(shuffled, gts, 0.5) == average_precision(dets, gts, 0.5));
  }
  SUBCASE("monotone rescaling of scores does not matter") {
    std::vector<EvalDetection> rescaled = dets;
    for (auto& d : rescaled) d.score = 3.0 * d.score - 7.0;
    CHECK(average_precision(rescaled, gts, 0.5) == average_precision(dets, gts, 0.5));
  }
  SUBCASE("curve has one point per detection") {
    const Matching m = match_detections(dets, gts, 0.5);
    REQUIRE(m.curve.size() == 3);
    CHECK(m.curve[1].precision == doctest::Approx(0.5));
    CHECK(m.curve[2].recall == 1.0);
  }
}

TEST_CASE("average precision edge cases") {
  const std::vector<EvalObject> gts{obj("a", make_box(0, 0, 10, 10))};
  CHECK(average_precision({}, gts, 0.5) == 0.0);
  CHECK(average_precision({}, {}, 0.5) == 0.0);
  const std::vector<EvalDetection> one{det("a", 0.1, make_box(0, 0, 10, 10))};
  CHECK(average_precision(one, {}, 0.5) == 0.0);
  CHECK(average_precision(one, gts, 0.5) == 1.0);

  SUBCASE("detections in another image do not match") {
    const std::vector<EvalDetection> elsewhere{det("b", 0.9, make_box(0, 0, 10, 10))};
    CHECK(average_precision(elsewhere, gts, 0.5) == 0.0);
  }
  SUBCASE("duplicates count as false positives") {
    const std::vector<EvalDetection> dup{det("a", 0.9, make_box(0, 0, 10, 10)), det("a", 0.8, make_box(0, 0, 10, 10))};
    const Matching m = match_detections(dup, gts, 0.5);
    CHECK(m.matched_object[0].has_value());
    CHECK_FALSE(m.matched_object[1].has_value());
    CHECK(m.ap == 1.0);
  }
  SUBCASE("tied scores rank by input order") {
    const std::vector<EvalDetection> tied{det("a", 0.5, make_box(200, 200, 210, 210)), det("a", 0.5, make_box(0, 0, 10, 10))};
    const Matching m = match_detections(tied, gts, 0.5);
    CHECK(m.ranked == std::vector<std::size_t>{0, 1});
    CHECK(m.ap == doctest::Approx(0.5));
  }
  SUBCASE("one detection per object in any order is perfect") {
    std::vector<EvalObject> many;
    std::vector<EvalDetection> hits;
    for (int i = 0; i < 6; ++i) {
      const Box b = make_box(20.0 * i, 0, 20.0 * i + 10, 10);
      many.push_back(obj("a", b));
      hits.push_back(det("a", static_cast<double>((i * 7) % 6), b));
    }
    CHECK(average_precision(hits, many, 0.5) == 1.0);
  }
}

TEST_CASE("part localization") {
  const GraphSpec spec = graph_of(3);
  const Box whole = make_box(0, 0, 100, 100);
  const Box head = make_box(0, 0, 10, 10);
  const Box torso = make_box(20, 20, 60, 60);
  const std::vector<EvalObject> gts{obj("a", whole, {whole, head, torso})};
  EvalConfig cfg;

  SUBCASE("perfect detections score 100 everywhere") {
    const std::vector<EvalDetection> dets{det("a", 1.0, whole, 0b111, {whole, head, torso})};
    for (const auto& pl : pcp_pop(spec, dets, gts, cfg)) {
      CHECK(pl.pop == 100.0);
      CHECK(pl.pcp == 100.0);
    }
  }
  SUBCASE("part at iou 0.35 counts for POP, not PCP") {
    const Box loose = make_box(0, 0, 10, 3.5);
    REQUIRE(iou(loose, head) == doctest::Approx(0.35));
    const std::vector<EvalDetection> dets{det("a", 1.0, whole, 0b111, {whole, loose, torso})};
    const auto pl = pcp_pop(spec, dets, gts, cfg);
    CHECK(pl[0].part == "head");
    CHECK(pl[0].pop == 100.0);
    CHECK(pl[0].pcp == 0.0);
    CHECK(pl[1].pcp == 100.0);
  }
  SUBCASE("object matched only at iou 0.45 is excluded") {
    const Box half = make_box(0, 0, 100, 45);
    REQUIRE(iou(half, whole) == doctest::Approx(0.45));
    const std::vector<EvalDetection> dets{det("a", 1.0, half, 0b111, {half, head, torso})};
    const auto pl = pcp_pop(spec, dets, gts, cfg);
    CHECK(pl[0].matched_objects == 0);
    CHECK_FALSE(pl[0].pop.has_value());
    CHECK_FALSE(pl[0].pcp.has_value());
  }
  SUBCASE("switched-off part lowers POP") {
    const std::vector<EvalDetection> dets{det("a", 1.0, whole, 0b101, {whole, std::nullopt, torso})};
    const auto pl = pcp_pop(spec, dets, gts, cfg);
    CHECK(pl[0].pop == 0.0);
    CHECK(pl[0].pcp == 0.0);
    CHECK_FALSE(pl[0].pcp_of_estimated.has_value());
  }
  SUBCASE("highest-scoring overlapping detection is the one judged") {
    const std::vector<EvalDetection> dets{det("a", 0.2, whole, 0b111, {whole, head, torso}),
                                          det("a", 0.9, whole, 0b001, {whole, std::nullopt, std::nullopt})};
    CHECK(pcp_pop(spec, dets, gts, cfg)[0].pop == 0.0);
  }
}

TEST_CASE("PCP never exceeds POP") {
  std::mt19937_64 rng(21);
  const GraphSpec spec = graph_of(4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<EvalObject> gts;
    std::vector<EvalDetection> dets;
    for (int o = 0; o < 4; ++o) {
      const std::string img = "i" + std::to_string(o % 2);
      NodeBoxes parts{random_box(rng)};
      for (int p = 1; p < 4; ++p) parts.push_back(rng() % 4 ? std::optional<Box>(random_box(rng)) : std::nullopt);
      gts.push_back(obj(img, *parts[0], parts));
    }
    for (int d = 0; d < 6; ++d) {
      const std::string img = "i" + std::to_string(d % 2);
      const auto& near = gts[rng() % gts.size()];
      NodeBoxes parts{near.box};
      std::uint32_t mask = 1;
      for (int p = 1; p < 4; ++p) {
        if (rng() % 3 == 0) {
          parts.push_back(std::nullopt);
          continue;
        }
        mask |= 1u << p;
        parts.push_back(rng() % 2 && near.node_boxes[static_cast<std::size_t>(p)] ? near.node_boxes[static_cast<std::size_t>(p)]
                                                                                    : std::optional<Box>(random_box(rng)));
      }
      dets.push_back(det(img, static_cast<double>(rng() % 100), near.box, mask, parts));
    }
    for (bool include : {false, true}) {
      EvalConfig cfg;
      cfg.pop_include_unmatched = include;
      for (const auto& pl : pcp_pop(spec, dets, gts, cfg)) {
        if (!include && pl.pcp) CHECK(*pl.pcp <= *pl.pop);
        CHECK(pl.correct <= pl.estimated);
        CHECK(pl.estimated <= pl.denominator);
      }
    }
  }
}

TEST_CASE("size classes") {
  const std::vector<double> areas{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto classes = size_classes(areas);
  const auto want = derived()["size_split_1_to_10"].get<std::vector<std::string>>();
  REQUIRE(classes.size() == want.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    CHECK(kSizeClassNames[static_cast<std::size_t>(classes[i])] == want[i]);
  }

  SUBCASE("input order does not matter") {
    const std::vector<double> reversed(areas.rbegin(), areas.rend());
    const auto rc = size_classes(reversed);
    for (std::size_t i = 0; i < rc.size(); ++i) CHECK(rc[i] == classes[areas.size() - 1 - i]);
  }
  SUBCASE("ties fall back to input order") {
    const std::vector<double> flat(10, 4.0);
    const auto fc = size_classes(flat);
    for (std::size_t i = 0; i < fc.size(); ++i) CHECK(fc[i] == classes[i]);
  }
  SUBCASE("empty input") { CHECK(size_classes({}).empty()); }
}

TEST_CASE("holistic-only rate by size") {
  std::vector<EvalObject> gts;
  std::vector<EvalDetection> dets;
  for (int i = 0; i < 10; ++i) {
    const double side = 10.0 + i;
    const Box b = make_box(100.0 * i, 0, 100.0 * i + side, side);
    gts.push_back(obj("a", b));
    // The three smallest are holistic-only.
    dets.push_back(det("a", 1.0, b, i < 3 ? 0b0001 : 0b0011));
  }
  const SizeTable t = holistic_only_rate_by_size(dets, gts, 0.0);
  CHECK(t.recalled == std::array<std::size_t, 5>{1, 2, 4, 2, 1});
  CHECK(t.rate[0] == 100.0);
  CHECK(t.rate[1] == 100.0);
  CHECK(t.rate[2] == 0.0);
  CHECK(t.rate[4] == 0.0);

  SUBCASE("detections below the recall threshold do not count") {
    const SizeTable none = holistic_only_rate_by_size(dets, gts, 2.0);
    for (const auto& r : none.rate) CHECK_FALSE(r.has_value());
  }
}
