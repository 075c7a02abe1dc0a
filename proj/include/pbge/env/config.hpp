#pragma once

#include <cstdint>
#include <string>

#include "pbge/config.hpp"

namespace pbge::env {

enum class RewardFunc { sparse, shaped1, budget, complex, step_penalty };

const char* reward_func_name(RewardFunc f);
RewardFunc parse_reward_func(const std::string& name);

/// Environment parameters. The first block carries the names and defaults of
/// the original parameter table; the rest pin geometry and profile details.
struct EnvConfig {
  std::uint64_t seed = 0;
  bool grayscale = true;
  bool transpose = true;  // channels-first observations
  int noops = 50;
  bool randomise = true;
  bool randomise_domain = false;
  int agent_history_len = 4;
  int agent_act_repeat = 4;
  double agent_speed = 300.0;     // px/s
  double agent_ang_speed = 4.91;  // rad/s
  int clutter_items = 10;
  double clutter_mass = 1.0;
  RewardFunc reward_func = RewardFunc::sparse;
  int max_timesteps = 300;
  double friction_coeff = 0.2;

  double target_radius = 30.0;
  double goal_size = 30.0;
  double goal_mass = 1.0;
  double clutter_size = 40.0;
  double max_spawn_radius = 400.0;
  double spawn_radius_fraction = 1.0;
  bool curriculum = false;
  double budget = 100.0;
  double w_gt = 0.15;
  double w_gtt = 0.15;
  double r_min = -2.0;
  double r_max = 2.0;
  double dr_friction_min = 0.1;
  double dr_friction_max = 0.4;
  double dr_clutter_size_min = 25.0;
  double dr_clutter_size_max = 60.0;
  std::string layout;  // empty: the shipped canonical layout

  int obs_size = 84;
  double view_scale = 1.0;  // world px per agent-view px
  bool render_frames = true;

  void validate() const;
  static EnvConfig from(const KeyValueConfig& kv);
  void to(KeyValueConfig& kv) const;
};

/// Directory holding shipped layouts, overridable with PBGE_DATA_DIR.
std::string data_dir();

}  // namespace pbge::env
