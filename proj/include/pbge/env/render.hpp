#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pbge/env/world.hpp"

namespace pbge::env {

/// Planar 8-bit image, channel-major (C x H x W).
struct ByteImage {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  ByteImage() = default;
  ByteImage(std::size_t c, std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  bool empty() const { return data.empty(); }
  friend bool operator==(const ByteImage&, const ByteImage&) = default;
};

/// Colour of the topmost shape covering world point `p`; draw order is
/// background, target, goal, clutter, gripper. No anti-aliasing.
Rgb shade(const WorldState& world, const Vec2& p);

/// Colour of world pixel (px, py), sampled at its center.
inline Rgb shade_pixel(const WorldState& world, long px, long py) {
  if (px < 0 || py < 0 || px >= static_cast<long>(kWorldSize) || py >= static_cast<long>(kWorldSize)) {
    return world.palette.background;
  }
  return shade(world, Vec2(static_cast<double>(px) + 0.5, static_cast<double>(py) + 0.5));
}

/// Full 3 x 800 x 800 RGB frame.
ByteImage render(const WorldState& world);

/// Binary PPM (P6) for 3-channel images, PGM (P5) for 1-channel ones.
void write_ppm(const ByteImage& image, const std::string& path);
void write_pgm(const ByteImage& image, const std::string& path);

}  // namespace pbge::env
