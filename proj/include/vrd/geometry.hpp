#pragma once

#include <algorithm>
#include <cmath>

#include "vrd/types.hpp"

namespace vrd {

inline double area(const BoundingBox& b) { return b.width() * b.height(); }

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union. A degenerate zero-area union yields 0.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

inline double center_distance(const BoundingBox& a, const BoundingBox& b) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  return std::sqrt(dx * dx + dy * dy);
}

/// Smallest box containing both inputs.
inline BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return BoundingBox{std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
                     std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max)};
}

}  // namespace vrd
