#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pbge/common.hpp"
#include "pbge/env/config.hpp"
#include "pbge/env/curriculum.hpp"
#include "pbge/env/render.hpp"
#include "pbge/env/rewards.hpp"
#include "pbge/env/world.hpp"

namespace pbge {
class TensorArchive;
}

namespace pbge::env {

enum class Action : int { forward = 0, backward = 1, turn_left = 2, turn_right = 3 };
inline constexpr int kNumActions = 4;

class ResetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepInfo {
  bool success = false;
  Distances distances;
  int episode_timestep = 0;
};

struct StepResult {
  ByteImage observation;  // raw 3 x 800 x 800 frame; empty when render_frames is off
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

/// One line per body: `kind x y angle_degrees size`, kind in
/// {gripper, goal, target, clutter}. Clutter lines are used in file order.
struct LayoutEntry {
  std::string kind;
  double x = 0.0, y = 0.0, angle_deg = 0.0, size = 0.0;
};
std::vector<LayoutEntry> parse_layout(std::istream& is);
std::vector<LayoutEntry> load_layout(const std::string& path);
std::string canonical_layout_path();

/// Called after every physics frame of a reset or step.
using FrameHook = std::function<void(const WorldState&)>;

class GripperEnv {
 public:
  explicit GripperEnv(EnvConfig config);

  StepResult reset(const FrameHook& hook = {});
  StepResult step(Action action, const FrameHook& hook = {});
  StepResult step(int action, const FrameHook& hook = {});

  const WorldState& world() const { return world_; }
  WorldState& mutable_world() { return world_; }
  const EnvConfig& config() const { return config_; }
  const CurriculumState& curriculum() const { return curriculum_; }
  void set_curriculum(const CurriculumState& state) { curriculum_ = state; }
  bool episode_active() const { return world_.active; }
  Rng& rng() { return rng_; }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  void spawn_fixed();
  void spawn_random(int clutter_count, double clutter_size_lo, double clutter_size_hi);
  void randomize_domain(int& clutter_count, double& size_lo, double& size_hi);
  double reward_for(Event event, const Distances& next) const;
  StepResult finish(double reward, Event event) const;

  EnvConfig config_;
  WorldState world_;
  CurriculumState curriculum_;
  Rng rng_;
  std::vector<LayoutEntry> layout_;
};

/// Samples a palette of five mutually distinct colours.
Palette random_palette(Rng& rng);

}  // namespace pbge::env
