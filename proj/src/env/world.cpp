#include "pbge/env/world.hpp"

#include <cmath>

namespace pbge::env {

namespace {

constexpr int kContactIterations = 4;

bool outside(const Vec2& p) { return p.x() < 0.0 || p.y() < 0.0 || p.x() > kWorldSize || p.y() > kWorldSize; }

void push_out_of_gripper(const Gripper& g, const std::array<OrientedBox, 3>& parts, Body& b) {
  for (const auto& part : parts) {
    auto contact = collide(part, b.box());
    if (!contact) continue;
    b.pos += contact->normal * contact->depth;
    const Vec2 surface_vel = g.vel + cross(g.omega, b.pos - g.pos);
    const double vn = (b.vel - surface_vel).dot(contact->normal);
    if (vn < 0.0) b.vel -= vn * contact->normal;
  }
}

void separate(Body& a, Body& b) {
  auto contact = collide(a.box(), b.box());
  if (!contact) return;
  const double ia = 1.0 / a.mass, ib = 1.0 / b.mass;
  const double share = contact->depth / (ia + ib);
  a.pos -= contact->normal * (share * ia);
  b.pos += contact->normal * (share * ib);
  const double vn = (b.vel - a.vel).dot(contact->normal);
  if (vn < 0.0) {
    const double j = -vn / (ia + ib);
    a.vel -= contact->normal * (j * ia);
    b.vel += contact->normal * (j * ib);
  }
}

}  // namespace

std::array<OrientedBox, 3> Gripper::parts() const {
  const Vec2 fwd = heading_vector(angle);
  const Vec2 side(-fwd.y(), fwd.x());
  return {OrientedBox{pos, angle, Vec2(10.0, 30.0)},
          OrientedBox{pos + 25.0 * fwd + 25.0 * side, angle, Vec2(15.0, 5.0)},
          OrientedBox{pos + 25.0 * fwd - 25.0 * side, angle, Vec2(15.0, 5.0)}};
}

Distances WorldState::distances() const {
  return {(gripper.pos - goal.pos).norm(), (goal.pos - target.pos).norm()};
}

bool WorldState::out_of_bounds() const {
  if (outside(gripper.pos) || outside(goal.pos)) return true;
  for (const auto& c : clutter) {
    if (outside(c.pos)) return true;
  }
  return false;
}

bool WorldState::goal_on_target() const { return (goal.pos - target.pos).norm() < target.radius; }

void physics_substep(WorldState& w, double dt) {
  w.gripper.pos += w.gripper.vel * dt;
  w.gripper.angle += w.gripper.omega * dt;

  std::vector<Body*> bodies;
  bodies.reserve(w.clutter.size() + 1);
  bodies.push_back(&w.goal);
  for (auto& c : w.clutter) bodies.push_back(&c);

  for (Body* b : bodies) {
    b->pos += b->vel * dt;
    b->angle += b->omega * dt;
  }

  const auto parts = w.gripper.parts();
  for (int it = 0; it < kContactIterations; ++it) {
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      for (std::size_t j = i + 1; j < bodies.size(); ++j) separate(*bodies[i], *bodies[j]);
    }
    // The gripper last so that nothing is left inside it.
    for (Body* b : bodies) push_out_of_gripper(w.gripper, parts, *b);
  }

  const double damping = std::exp(-w.friction * dt);
  for (Body* b : bodies) {
    b->vel *= damping;
    b->omega *= damping;
  }
  ++w.frames;
}

}  // namespace pbge::env
