#include "pbge/obs/pipeline.hpp"

#include <cmath>

#include "pbge/tensor/serialize.hpp"

namespace pbge::obs {

using env::kWorldSize;
using env::Rgb;
using env::Vec2;

namespace {

constexpr std::size_t kFrame = 800;

// Source index of output pixel `i` at the given resolution.
std::size_t source_index(std::size_t i, std::size_t size) { return i * kFrame / size; }

struct ViewBasis {
  Vec2 forward, right;
};

ViewBasis basis(double heading) {
  const Vec2 d = env::heading_vector(heading);
  return {d, Vec2(-d.y(), d.x())};
}

Vec2 view_point(const Vec2& pos, const ViewBasis& b, double u, double v, double scale) {
  const double a = (u + 0.5 - 400.0) * scale;
  const double up = -(v + 0.5 - 400.0) * scale;
  return pos + a * b.right + up * b.forward;
}

}  // namespace

ObsConfig ObsConfig::from(const env::EnvConfig& c) {
  return {static_cast<std::size_t>(c.obs_size), static_cast<std::size_t>(c.agent_history_len), c.grayscale,
          c.transpose, c.view_scale};
}

Shape ObsConfig::shape() const {
  if (transpose) return {channels(), size, size};
  return {size, size, channels()};
}

Vec2 view_to_world(const Vec2& pos, double heading, double u, double v, double view_scale) {
  return view_point(pos, basis(heading), u, v, view_scale);
}

ByteImage agent_centric(const ByteImage& frame, const Vec2& pos, double heading, const Rgb& background,
                        double view_scale) {
  if (frame.channels != 3 || frame.height != kFrame || frame.width != kFrame) {
    throw ContractViolation("agent_centric: expected a 3x800x800 frame");
  }
  const ViewBasis b = basis(heading);
  ByteImage out(3, kFrame, kFrame);
  const std::size_t plane = kFrame * kFrame;
  for (std::size_t v = 0; v < kFrame; ++v) {
    for (std::size_t u = 0; u < kFrame; ++u) {
      const Vec2 w = view_point(pos, b, static_cast<double>(u), static_cast<double>(v), view_scale);
      const double fx = std::floor(w.x()), fy = std::floor(w.y());
      const std::size_t o = v * kFrame + u;
      if (fx < 0.0 || fy < 0.0 || fx >= kWorldSize || fy >= kWorldSize) {
        out.data[o] = background.r;
        out.data[plane + o] = background.g;
        out.data[2 * plane + o] = background.b;
        continue;
      }
      const std::size_t s = static_cast<std::size_t>(fy) * kFrame + static_cast<std::size_t>(fx);
      for (std::size_t c = 0; c < 3; ++c) out.data[c * plane + o] = frame.data[c * plane + s];
    }
  }
  return out;
}

ByteImage downsample(const ByteImage& frame, std::size_t size) {
  if (frame.height != kFrame || frame.width != kFrame) throw ContractViolation("downsample: expected 800x800 input");
  if (size == 0) throw ContractViolation("downsample: size must be positive");
  ByteImage out(frame.channels, size, size);
  for (std::size_t c = 0; c < frame.channels; ++c) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) out.at(c, i, j) = frame.at(c, source_index(i, size), source_index(j, size));
    }
  }
  return out;
}

std::uint8_t luminance(const Rgb& c) {
  return static_cast<std::uint8_t>(std::lround(0.299 * c.r + 0.587 * c.g + 0.114 * c.b));
}

ByteImage grayscale(const ByteImage& frame) {
  if (frame.channels != 3) throw ContractViolation("grayscale: expected 3 channels");
  ByteImage out(1, frame.height, frame.width);
  const std::size_t plane = frame.height * frame.width;
  for (std::size_t i = 0; i < plane; ++i) {
    out.data[i] = luminance({frame.data[i], frame.data[plane + i], frame.data[2 * plane + i]});
  }
  return out;
}

ByteImage process_frame(const ByteImage& raw, const env::WorldState& world, const ObsConfig& cfg) {
  ByteImage small = downsample(
      agent_centric(raw, world.gripper.pos, world.gripper.angle, world.palette.background, cfg.view_scale), cfg.size);
  return cfg.grayscale ? grayscale(small) : small;
}

ByteImage observe_world(const env::WorldState& world, const ObsConfig& cfg) {
  const ViewBasis b = basis(world.gripper.angle);
  const std::size_t n = cfg.size;
  ByteImage out(cfg.channels_per_frame(), n, n);
  const std::size_t plane = n * n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 w = view_point(world.gripper.pos, b, static_cast<double>(source_index(j, n)),
                                static_cast<double>(source_index(i, n)), cfg.view_scale);
      const double fx = std::floor(w.x()), fy = std::floor(w.y());
      const Rgb c = (fx < 0.0 || fy < 0.0 || fx >= kWorldSize || fy >= kWorldSize)
                        ? world.palette.background
                        : env::shade_pixel(world, static_cast<long>(fx), static_cast<long>(fy));
      const std::size_t o = i * n + j;
      if (cfg.grayscale) {
        out.data[o] = luminance(c);
      } else {
        out.data[o] = c.r;
        out.data[plane + o] = c.g;
        out.data[2 * plane + o] = c.b;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FrameStack::FrameStack(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractViolation("FrameStack capacity must be positive");
}

void FrameStack::push(ByteImage frame) {
  if (!frames_.empty() && (frame.channels != frames_.front().channels || frame.height != frames_.front().height ||
                           frame.width != frames_.front().width)) {
    throw ContractViolation("FrameStack: frame extents changed");
  }
  if (frames_.size() == capacity_) frames_.pop_front();
  frames_.push_back(std::move(frame));
}

std::vector<std::uint8_t> FrameStack::stacked_bytes() const {
  if (!full()) throw ContractViolation("FrameStack: observation requested before the stack is full");
  std::vector<std::uint8_t> out;
  out.reserve(frames_.size() * frames_.front().data.size());
  for (const auto& f : frames_) out.insert(out.end(), f.data.begin(), f.data.end());
  return out;
}

Tensor bytes_to_observation(std::span<const std::uint8_t> bytes, const Shape& shape) {
  if (shape_size(shape) != bytes.size()) throw ContractViolation("bytes_to_observation: size mismatch");
  Tensor t(shape);
  auto d = t.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) d[i] = bytes[i] / 255.0;
  return t;
}

Tensor FrameStack::observation(bool transpose) const {
  if (!full()) throw ContractViolation("frame stack holds " + std::to_string(size()) + " of " +
                                       std::to_string(capacity_) + " frames; reset must fill it");
  const std::vector<std::uint8_t> bytes = stacked_bytes();
  const ByteImage& f = frames_.front();
  const std::size_t c = f.channels * frames_.size();
  if (transpose) return bytes_to_observation(bytes, {c, f.height, f.width});
  Tensor t({f.height, f.width, c});
  const std::size_t plane = f.height * f.width;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < plane; ++p) t[p * c + ch] = bytes[ch * plane + p] / 255.0;
  }
  return t;
}

Tensor push_and_stack(FrameStack& stack, ByteImage frame, bool transpose) {
  stack.push(std::move(frame));
  return stack.observation(transpose);
}

// ---------------------------------------------------------------------------

ObservationEnv::ObservationEnv(const env::EnvConfig& config)
    : env_([&] {
        env::EnvConfig c = config;
        c.render_frames = false;
        return c;
      }()),
      cfg_(ObsConfig::from(config)),
      stack_(cfg_.history) {}

ObsStep ObservationEnv::reset() {
  stack_.clear();
  const int noops = env_.config().noops;
  const int first_kept = noops - static_cast<int>(cfg_.history);
  int frame = 0;
  env::StepResult r = env_.reset([&](const env::WorldState& w) {
    if (frame++ >= first_kept) stack_.push(observe_world(w, cfg_));
  });
  if (stack_.size() == 0) stack_.push(observe_world(env_.world(), cfg_));
  while (!stack_.full()) stack_.push(ByteImage(stack_.frames().front()));
  return {stack_.observation(cfg_.transpose), r.reward, r.terminated, r.truncated, r.info};
}

ObsStep ObservationEnv::step(int action) {
  env::StepResult r = env_.step(action);
  stack_.push(observe_world(env_.world(), cfg_));
  return {stack_.observation(cfg_.transpose), r.reward, r.terminated, r.truncated, r.info};
}

void ObservationEnv::save(TensorArchive& ar, const std::string& prefix) const {
  env_.save(ar, prefix + ".env");
  ar.put_u64(prefix + ".stack_size", stack_.size());
  std::vector<std::uint8_t> bytes;
  for (const auto& f : stack_.frames()) bytes.insert(bytes.end(), f.data.begin(), f.data.end());
  ar.put_bytes(prefix + ".stack", bytes);
}

void ObservationEnv::load(const TensorArchive& ar, const std::string& prefix) {
  env_.load(ar, prefix + ".env");
  const auto n = ar.get_u64(prefix + ".stack_size");
  const std::vector<std::uint8_t> bytes = ar.get_bytes(prefix + ".stack");
  const std::size_t frame = cfg_.channels_per_frame() * cfg_.size * cfg_.size;
  if (bytes.size() != n * frame) throw FormatError("frame stack size mismatch in checkpoint");
  stack_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    ByteImage img(cfg_.channels_per_frame(), cfg_.size, cfg_.size);
    std::copy(bytes.begin() + static_cast<long>(i * frame), bytes.begin() + static_cast<long>((i + 1) * frame),
              img.data.begin());
    stack_.push(std::move(img));
  }
}

}  // namespace pbge::obs
