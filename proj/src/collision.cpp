#include "avstress/collision.hpp"

#include <algorithm>

namespace avstress {

std::array<Vec2, 4> OrientedRect::corners() const {
  const Vec2 u = unit_from_angle(heading);
  const Vec2 n{-u.y, u.x};
  const Vec2 hl = 0.5 * length * u;
  const Vec2 hw = 0.5 * width * n;
  return {center + hl + hw, center - hl + hw, center - hl - hw, center + hl - hw};
}

namespace {

// Projection radius of a rectangle onto a unit axis.
double radius_on(const OrientedRect& r, Vec2 u, Vec2 n, Vec2 axis) {
  return 0.5 * r.length * std::abs(u.dot(axis)) + 0.5 * r.width * std::abs(n.dot(axis));
}

}  // namespace

bool overlaps(const OrientedRect& a, const OrientedRect& b) {
  const Vec2 delta = b.center - a.center;
  if (delta.norm() >= a.half_diagonal() + b.half_diagonal()) return false;

  const Vec2 ua = unit_from_angle(a.heading);
  const Vec2 na{-ua.y, ua.x};
  const Vec2 ub = unit_from_angle(b.heading);
  const Vec2 nb{-ub.y, ub.x};
  for (Vec2 axis : {ua, na, ub, nb}) {
    const double dist = std::abs(delta.dot(axis));
    if (dist >= radius_on(a, ua, na, axis) + radius_on(b, ub, nb, axis)) return false;
  }
  return true;
}

}  // namespace avstress
