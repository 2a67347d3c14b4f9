#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "partswitch/geometry.hpp"
#include "support.hpp"

using namespace partswitch;
using partswitch::testing::derived;

TEST_CASE("iou of a box with itself is one") {
  const Box b = make_box(3, 4, 10, 12);
  CHECK(iou(b, b) == 1.0);
}

TEST_CASE("iou of disjoint boxes is zero") {
  CHECK(iou(make_box(0, 0, 1, 1), make_box(2, 2, 3, 3)) == 0.0);
  // Touching edges share no area.
  CHECK(iou(make_box(0, 0, 1, 1), make_box(1, 0, 2, 1)) == 0.0);
}

TEST_CASE("iou of half-shifted squares") {
  const double got = iou(make_box(0, 0, 10, 10), make_box(5, 0, 15, 10));
  CHECK(got == doctest::Approx(derived()["iou_half_overlap"].get<double>()).epsilon(1e-15));
}

TEST_CASE("iou with a zero-area box is zero, not NaN") {
  const Box flat = make_box(0, 0, 0, 0);
  CHECK(iou(flat, flat) == 0.0);
  CHECK(iou(flat, make_box(0, 0, 1, 1)) == 0.0);
}

TEST_CASE("iou is symmetric and bounded") {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 2000; ++n) {
    const Box a = partswitch::testing::random_box(rng);
    const Box b = partswitch::testing::random_box(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("make_box rejects disorder and non-finite corners") {
  CHECK_THROWS_AS(make_box(2, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_box(0, 2, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_box(0, 0, std::numeric_limits<double>::quiet_NaN(), 1), std::invalid_argument);
  CHECK_THROWS_AS(make_box(0, 0, std::numeric_limits<double>::infinity(), 1), std::invalid_argument);
}

TEST_CASE("ordered swaps reversed corners") {
  const Box b = ordered(Box{5, 7, 1, 2});
  CHECK(b == Box{1, 2, 5, 7});
}

TEST_CASE("union_box") {
  SUBCASE("single element") {
    const std::vector<Box> one{make_box(1, 2, 3, 4)};
    CHECK(union_box(one) == one[0]);
  }
  SUBCASE("nesting") {
    const std::vector<Box> boxes{make_box(0, 0, 10, 10), make_box(2, 2, 3, 3)};
    CHECK(union_box(boxes) == boxes[0]);
  }
  SUBCASE("corner extremes") {
    const std::vector<Box> boxes{make_box(0, 0, 2, 2), make_box(4, 4, 6, 6)};
    CHECK(union_box(boxes) == make_box(0, 0, 6, 6));
  }
  SUBCASE("empty input") { CHECK_THROWS(union_box(std::vector<Box>{})); }
}

TEST_CASE("translation and scaling preserve iou") {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 500; ++n) {
    const Box a = partswitch::testing::random_box(rng);
    const Box b = partswitch::testing::random_box(rng);
    const double base = iou(a, b);
    CHECK(iou(translated(a, 13.5, -7.25), translated(b, 13.5, -7.25)) == doctest::Approx(base).epsilon(1e-12));
    CHECK(iou(scaled(a, 3.0), scaled(b, 3.0)) == doctest::Approx(base).epsilon(1e-12));
  }
}
