#include "pbge/env/render.hpp"

#include <fstream>

#include "pbge/common.hpp"

namespace pbge::env {

namespace {

// Cheap reject before the oriented test.
bool near(const OrientedBox& b, const Vec2& p) {
  const double r = b.half.x() + b.half.y();
  return std::abs(p.x() - b.center.x()) <= r && std::abs(p.y() - b.center.y()) <= r;
}

}  // namespace

Rgb shade(const WorldState& w, const Vec2& p) {
  const Vec2 g = p - w.gripper.pos;
  if (g.squaredNorm() <= 60.0 * 60.0) {
    for (const auto& part : w.gripper.parts()) {
      if (part.contains(p)) return w.palette.gripper;
    }
  }
  for (auto it = w.clutter.rbegin(); it != w.clutter.rend(); ++it) {
    const OrientedBox b = it->box();
    if (near(b, p) && b.contains(p)) return w.palette.clutter;
  }
  const OrientedBox goal = w.goal.box();
  if (near(goal, p) && goal.contains(p)) return w.palette.goal;
  if (Circle{w.target.pos, w.target.radius}.contains(p)) return w.palette.target;
  return w.palette.background;
}

ByteImage render(const WorldState& w) {
  const auto n = static_cast<std::size_t>(kWorldSize);
  ByteImage img(3, n, n);
  const std::size_t plane = n * n;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const Rgb c = shade_pixel(w, static_cast<long>(x), static_cast<long>(y));
      const std::size_t i = y * n + x;
      img.data[i] = c.r;
      img.data[plane + i] = c.g;
      img.data[2 * plane + i] = c.b;
    }
  }
  return img;
}

void write_ppm(const ByteImage& image, const std::string& path) {
  if (image.channels != 3) throw ContractViolation("write_ppm: expected 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const std::size_t plane = image.width * image.height;
  std::vector<char> row(image.width * 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) row[x * 3 + c] = static_cast<char>(image.data[c * plane + y * image.width + x]);
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

void write_pgm(const ByteImage& image, const std::string& path) {
  if (image.channels != 1) throw ContractViolation("write_pgm: expected 1 channel");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
}

}  // namespace pbge::env
