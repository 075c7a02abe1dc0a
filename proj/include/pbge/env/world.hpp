#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pbge/env/geometry.hpp"

namespace pbge::env {

inline constexpr double kWorldSize = 800.0;
inline constexpr double kFps = 50.0;
inline constexpr double kFrameDt = 1.0 / kFps;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Palette {
  Rgb background{0, 0, 0};
  Rgb target{255, 255, 0};
  Rgb goal{0, 160, 0};
  Rgb clutter{0, 0, 255};
  Rgb gripper{160, 160, 160};
  friend bool operator==(const Palette&, const Palette&) = default;
};

/// Square or rectangular dynamic body.
struct Body {
  Vec2 pos = Vec2::Zero();
  double angle = 0.0;
  Vec2 vel = Vec2::Zero();
  double omega = 0.0;
  Vec2 half = Vec2::Zero();
  double mass = 1.0;

  OrientedBox box() const { return {pos, angle, half}; }
};

/// Kinematic C-shaped gripper: a 20 x 60 base bar and two 30 x 10 prongs
/// reaching forward along the heading.
struct Gripper {
  Vec2 pos = Vec2::Zero();
  double angle = -1.5707963267948966;  // heading up the image
  Vec2 vel = Vec2::Zero();
  double omega = 0.0;

  std::array<OrientedBox, 3> parts() const;
};

struct Target {
  Vec2 pos = Vec2::Zero();
  double radius = 30.0;
};

struct Distances {
  double gt = 0.0;   // gripper to goal object
  double gtt = 0.0;  // goal object to target
  double total() const { return gt + gtt; }
};

struct WorldState {
  Gripper gripper;
  Body goal;
  Target target;
  std::vector<Body> clutter;
  Palette palette;
  double friction = 0.2;

  int timestep = 0;
  std::uint64_t frames = 0;  // physics frames since reset began
  Distances initial;
  Distances prev;
  Distances best;
  double best_total = 0.0;
  int notmoving = 0;
  bool active = false;

  Distances distances() const;
  bool out_of_bounds() const;
  bool goal_on_target() const;
};

/// Advances one physics frame: integration, contact resolution against the
/// kinematic gripper and between bodies, then exponential ground friction.
void physics_substep(WorldState& world, double dt);

}  // namespace pbge::env
