#pragma once

#include <array>

#include "avstress/common.hpp"

namespace avstress {

struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // along heading
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
  double half_diagonal() const { return 0.5 * std::hypot(length, width); }
};

// Separating-axis test. Rectangles that merely touch are not overlapping.
bool overlaps(const OrientedRect& a, const OrientedRect& b);

}  // namespace avstress
