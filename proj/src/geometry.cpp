#include "partswitch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace partswitch {

Box make_box(double x1, double y1, double x2, double y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw std::invalid_argument("box has non-finite coordinates");
  }
  Box b{x1, y1, x2, y2};
  if (!b.valid()) {
    throw std::invalid_argument("box corners out of order");
  }
  return b;
}

Box ordered(const Box& b) {
  Box r = b;
  if (r.x1 > r.x2) std::swap(r.x1, r.x2);
  if (r.y1 > r.y2) std::swap(r.y1, r.y2);
  return r;
}

Box translated(const Box& b, double tx, double ty) {
  return {b.x1 + tx, b.y1 + ty, b.x2 + tx, b.y2 + ty};
}

Box scaled(const Box& b, double factor) {
  return {b.x1 * factor, b.y1 * factor, b.x2 * factor, b.y2 * factor};
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0 || inter <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Box union_box(std::span<const Box> boxes) {
  if (boxes.empty()) {
    throw std::invalid_argument("union_box of an empty list");
  }
  Box r = boxes.front();
  for (const Box& b : boxes.subspan(1)) {
    r.x1 = std::min(r.x1, b.x1);
    r.y1 = std::min(r.y1, b.y1);
    r.x2 = std::max(r.x2, b.x2);
    r.y2 = std::max(r.y2, b.y2);
  }
  return r;
}

}  // namespace partswitch
