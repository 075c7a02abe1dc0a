#pragma once

#include <deque>
#include <string>

#include "pbge/env/config.hpp"
#include "pbge/env/gripper_env.hpp"
#include "pbge/env/render.hpp"
#include "pbge/tensor/tensor.hpp"

namespace pbge::obs {

using env::ByteImage;

struct ObsConfig {
  std::size_t size = 84;
  std::size_t history = 4;
  bool grayscale = true;
  bool transpose = true;
  double view_scale = 1.0;

  static ObsConfig from(const env::EnvConfig& c);
  std::size_t channels_per_frame() const { return grayscale ? 1 : 3; }
  std::size_t channels() const { return history * channels_per_frame(); }
  Shape shape() const;
};

/// World point seen at pixel (u, v) of the agent-centric view: the gripper
/// sits at the view center with its heading pointing up.
env::Vec2 view_to_world(const env::Vec2& pos, double heading, double u, double v, double view_scale = 1.0);

/// Re-frames an 800 x 800 frame around the gripper pose; nearest-neighbour
/// inverse mapping, background colour outside the frame.
ByteImage agent_centric(const ByteImage& frame, const env::Vec2& pos, double heading, const env::Rgb& background,
                        double view_scale = 1.0);

/// output(c, i, j) = input(c, floor(i * 800 / size), floor(j * 800 / size)).
ByteImage downsample(const ByteImage& frame, std::size_t size = 84);

/// Y = round(0.299 R + 0.587 G + 0.114 B).
ByteImage grayscale(const ByteImage& frame);
std::uint8_t luminance(const env::Rgb& c);

/// Full slow path on a raw frame: agent-centric, downsample, optional grayscale.
ByteImage process_frame(const ByteImage& raw, const env::WorldState& world, const ObsConfig& cfg);

/// Same result as process_frame(render(world), ...) without rendering the raw frame.
ByteImage observe_world(const env::WorldState& world, const ObsConfig& cfg);

/// Ring of the most recent processed frames, oldest first.
class FrameStack {
 public:
  explicit FrameStack(std::size_t capacity);

  void clear() { frames_.clear(); }
  void push(ByteImage frame);
  bool full() const { return frames_.size() == capacity_; }
  std::size_t size() const { return frames_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<ByteImage>& frames() const { return frames_; }

  /// Channel-wise concatenation oldest to newest, scaled to [0, 1].
  Tensor observation(bool transpose = true) const;
  /// Raw bytes of the stacked observation, channel-major.
  std::vector<std::uint8_t> stacked_bytes() const;

 private:
  std::size_t capacity_;
  std::deque<ByteImage> frames_;
};

Tensor push_and_stack(FrameStack& stack, ByteImage frame, bool transpose = true);

/// Bytes in [0, 255] to floats in [0, 1] with the given shape.
Tensor bytes_to_observation(std::span<const std::uint8_t> bytes, const Shape& shape);

struct ObsStep {
  Tensor observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  env::StepInfo info;
};

/// Environment plus observation pipeline: what an agent interacts with.
class ObservationEnv {
 public:
  explicit ObservationEnv(const env::EnvConfig& config);

  ObsStep reset();
  ObsStep step(int action);

  env::GripperEnv& env() { return env_; }
  const env::GripperEnv& env() const { return env_; }
  const ObsConfig& obs_config() const { return cfg_; }
  const FrameStack& stack() const { return stack_; }
  /// Newest processed frame, for compact replay storage.
  const ByteImage& latest_frame() const { return stack_.frames().back(); }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  env::GripperEnv env_;
  ObsConfig cfg_;
  FrameStack stack_;
};

}  // namespace pbge::obs
