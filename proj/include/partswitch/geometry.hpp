#pragma once

#include <span>

namespace partswitch {

/// Axis-aligned box in continuous pixel coordinates, (x1, y1) upper-left and
/// (x2, y2) lower-right. Areas use (x2 - x1) * (y2 - y1) with no +1 convention.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Throws std::invalid_argument when corners are out of order or non-finite.
Box make_box(double x1, double y1, double x2, double y2);

/// Swaps corners where needed so that x1 <= x2 and y1 <= y2.
Box ordered(const Box& b);

Box translated(const Box& b, double tx, double ty);
Box scaled(const Box& b, double factor);

double intersection_area(const Box& a, const Box& b);

/// Intersection over union; 0 when the union has zero area.
double iou(const Box& a, const Box& b);

/// Smallest box containing every input. Throws on an empty list.
Box union_box(std::span<const Box> boxes);

}  // namespace partswitch
