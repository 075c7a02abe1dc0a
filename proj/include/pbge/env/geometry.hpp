#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>

namespace pbge::env {

using Vec2 = Eigen::Vector2d;

/// Unit vector for an image-space heading (y grows downward).
inline Vec2 heading_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

/// z-component of omega x r for a planar rotation rate.
inline Vec2 cross(double omega, const Vec2& r) { return {-omega * r.y(), omega * r.x()}; }

struct OrientedBox {
  Vec2 center = Vec2::Zero();
  double angle = 0.0;
  Vec2 half = Vec2::Zero();  // half extents along the local axes

  Vec2 axis_x() const { return heading_vector(angle); }
  Vec2 axis_y() const { return {-std::sin(angle), std::cos(angle)}; }
  bool contains(const Vec2& p) const;
  double radius() const { return half.norm(); }
};

struct Circle {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;

  bool contains(const Vec2& p) const { return (p - center).squaredNorm() <= radius * radius; }
};

struct Contact {
  Vec2 normal;  // unit, pointing from the first shape toward the second
  double depth;
};

/// Separating-axis test; returns the axis of least penetration when the boxes overlap.
std::optional<Contact> collide(const OrientedBox& a, const OrientedBox& b);

}  // namespace pbge::env
