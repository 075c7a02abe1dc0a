#include "pbge/env/config.hpp"

#include <cstdlib>

namespace pbge::env {

const char* reward_func_name(RewardFunc f) {
  switch (f) {
    case RewardFunc::sparse: return "sparse";
    case RewardFunc::shaped1: return "shaped1";
    case RewardFunc::budget: return "budget";
    case RewardFunc::complex: return "complex";
    case RewardFunc::step_penalty: return "step_penalty";
  }
  return "?";
}

RewardFunc parse_reward_func(const std::string& name) {
  for (auto f : {RewardFunc::sparse, RewardFunc::shaped1, RewardFunc::budget, RewardFunc::complex,
                 RewardFunc::step_penalty}) {
    if (name == reward_func_name(f)) return f;
  }
  throw ConfigError("unknown reward_func '" + name + "'");
}

void EnvConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("env config: ") + what);
  };
  need(noops >= 0, "noops must be non-negative");
  need(agent_history_len >= 1, "agent_history_len must be at least 1");
  need(agent_act_repeat >= 1, "agent_act_repeat must be at least 1");
  need(clutter_items >= 0, "clutter_items must be non-negative");
  need(clutter_mass > 0.0 && goal_mass > 0.0, "masses must be positive");
  need(max_timesteps >= 1, "max_timesteps must be at least 1");
  need(friction_coeff >= 0.0, "friction_coeff must be non-negative");
  need(target_radius > 0.0 && goal_size > 0.0 && clutter_size > 0.0, "sizes must be positive");
  need(spawn_radius_fraction > 0.0 && spawn_radius_fraction <= 1.0, "spawn_radius_fraction must lie in (0, 1]");
  need(r_min < r_max, "r_min must be below r_max");
  need(dr_friction_min <= dr_friction_max, "friction range is empty");
  need(dr_clutter_size_min <= dr_clutter_size_max, "clutter size range is empty");
  need(obs_size >= 8, "obs_size too small");
  need(view_scale > 0.0, "view_scale must be positive");
}

EnvConfig EnvConfig::from(const KeyValueConfig& kv) {
  EnvConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.grayscale = kv.get_bool("grayscale", c.grayscale);
  c.transpose = kv.get_bool("transpose", c.transpose);
  c.noops = static_cast<int>(kv.get_int("noops", c.noops));
  c.randomise = kv.get_bool("randomise", c.randomise);
  c.randomise_domain = kv.get_bool("randomise_domain", c.randomise_domain);
  c.agent_history_len = static_cast<int>(kv.get_int("agent_history_len", c.agent_history_len));
  c.agent_act_repeat = static_cast<int>(kv.get_int("agent_act_repeat", c.agent_act_repeat));
  c.agent_speed = kv.get_double("agent_speed", c.agent_speed);
  c.agent_ang_speed = kv.get_double("agent_ang_speed", c.agent_ang_speed);
  c.clutter_items = static_cast<int>(kv.get_int("clutter_items", c.clutter_items));
  c.clutter_mass = kv.get_double("clutter_mass", c.clutter_mass);
  if (kv.has("reward_func")) c.reward_func = parse_reward_func(kv.get_string("reward_func"));
  c.max_timesteps = static_cast<int>(kv.get_int("max_timesteps", c.max_timesteps));
  c.friction_coeff = kv.get_double("friction_coeff", c.friction_coeff);
  c.target_radius = kv.get_double("target_radius", c.target_radius);
  c.goal_size = kv.get_double("goal_size", c.goal_size);
  c.goal_mass = kv.get_double("goal_mass", c.goal_mass);
  c.clutter_size = kv.get_double("clutter_size", c.clutter_size);
  c.max_spawn_radius = kv.get_double("max_spawn_radius", c.max_spawn_radius);
  c.spawn_radius_fraction = kv.get_double("spawn_radius_fraction", c.spawn_radius_fraction);
  c.curriculum = kv.get_bool("curriculum", c.curriculum);
  c.budget = kv.get_double("budget", c.budget);
  c.w_gt = kv.get_double("w_gt", c.w_gt);
  c.w_gtt = kv.get_double("w_gtt", c.w_gtt);
  c.r_min = kv.get_double("r_min", c.r_min);
  c.r_max = kv.get_double("r_max", c.r_max);
  c.dr_friction_min = kv.get_double("dr_friction_min", c.dr_friction_min);
  c.dr_friction_max = kv.get_double("dr_friction_max", c.dr_friction_max);
  c.dr_clutter_size_min = kv.get_double("dr_clutter_size_min", c.dr_clutter_size_min);
  c.dr_clutter_size_max = kv.get_double("dr_clutter_size_max", c.dr_clutter_size_max);
  c.layout = kv.get_string("layout", c.layout);
  c.obs_size = static_cast<int>(kv.get_int("obs_size", c.obs_size));
  c.view_scale = kv.get_double("view_scale", c.view_scale);
  c.render_frames = kv.get_bool("render_frames", c.render_frames);
  c.validate();
  return c;
}

void EnvConfig::to(KeyValueConfig& kv) const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("seed", std::to_string(seed));
  kv.set("grayscale", b(grayscale));
  kv.set("transpose", b(transpose));
  kv.set("noops", std::to_string(noops));
  kv.set("randomise", b(randomise));
  kv.set("randomise_domain", b(randomise_domain));
  kv.set("agent_history_len", std::to_string(agent_history_len));
  kv.set("agent_act_repeat", std::to_string(agent_act_repeat));
  kv.set("agent_speed", format_double(agent_speed));
  kv.set("agent_ang_speed", format_double(agent_ang_speed));
  kv.set("clutter_items", std::to_string(clutter_items));
  kv.set("clutter_mass", format_double(clutter_mass));
  kv.set("reward_func", reward_func_name(reward_func));
  kv.set("max_timesteps", std::to_string(max_timesteps));
  kv.set("friction_coeff", format_double(friction_coeff));
  kv.set("target_radius", format_double(target_radius));
  kv.set("goal_size", format_double(goal_size));
  kv.set("goal_mass", format_double(goal_mass));
  kv.set("clutter_size", format_double(clutter_size));
  kv.set("max_spawn_radius", format_double(max_spawn_radius));
  kv.set("spawn_radius_fraction", format_double(spawn_radius_fraction));
  kv.set("curriculum", b(curriculum));
  kv.set("budget", format_double(budget));
  kv.set("w_gt", format_double(w_gt));
  kv.set("w_gtt", format_double(w_gtt));
  kv.set("r_min", format_double(r_min));
  kv.set("r_max", format_double(r_max));
  kv.set("dr_friction_min", format_double(dr_friction_min));
  kv.set("dr_friction_max", format_double(dr_friction_max));
  kv.set("dr_clutter_size_min", format_double(dr_clutter_size_min));
  kv.set("dr_clutter_size_max", format_double(dr_clutter_size_max));
  kv.set("layout", layout);
  kv.set("obs_size", std::to_string(obs_size));
  kv.set("view_scale", format_double(view_scale));
  kv.set("render_frames", b(render_frames));
}

std::string data_dir() {
  if (const char* env = std::getenv("PBGE_DATA_DIR")) return env;
  return PBGE_DATA_DIR;
}

}  // namespace pbge::env
