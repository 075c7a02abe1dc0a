#include "pbge/env/geometry.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace pbge::env {

bool OrientedBox::contains(const Vec2& p) const {
  const Vec2 d = p - center;
  return std::abs(d.dot(axis_x())) <= half.x() && std::abs(d.dot(axis_y())) <= half.y();
}

namespace {

double projected_radius(const OrientedBox& b, const Vec2& axis) {
  return b.half.x() * std::abs(b.axis_x().dot(axis)) + b.half.y() * std::abs(b.axis_y().dot(axis));
}

}  // namespace

std::optional<Contact> collide(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 delta = b.center - a.center;
  if (delta.norm() > a.radius() + b.radius()) return std::nullopt;
  const std::array<Vec2, 4> axes{a.axis_x(), a.axis_y(), b.axis_x(), b.axis_y()};
  Contact best{Vec2::Zero(), std::numeric_limits<double>::infinity()};
  for (const Vec2& axis : axes) {
    const double dist = delta.dot(axis);
    const double overlap = projected_radius(a, axis) + projected_radius(b, axis) - std::abs(dist);
    if (overlap <= 0.0) return std::nullopt;
    if (overlap < best.depth) best = {dist < 0.0 ? Vec2(-axis) : axis, overlap};
  }
  return best;
}

}  // namespace pbge::env
