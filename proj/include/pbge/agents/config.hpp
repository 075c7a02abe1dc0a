#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pbge/config.hpp"

namespace pbge::agents {

struct DqnConfig {
  double learning_rate = 1e-4;
  std::int64_t buffer_size = 1'000'000;
  std::int64_t learning_starts = 50'000;
  std::int64_t batch_size = 32;
  double gamma = 0.99;
  std::int64_t train_freq = 4;
  std::int64_t gradient_steps = 1;
  std::int64_t target_update_interval = 10'000;
  double exploration_fraction = 0.1;
  double exploration_initial_eps = 1.0;
  double exploration_final_eps = 0.05;
  double max_grad_norm = 10.0;
  bool double_dqn = false;

  bool operator==(const DqnConfig&) const = default;
};

struct PpoConfig {
  double learning_rate = 3e-4;
  std::int64_t n_steps = 2048;
  std::int64_t batch_size = 64;
  std::int64_t n_epochs = 10;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_range = 0.2;
  std::optional<double> clip_range_vf;
  bool normalize_advantage = true;
  double ent_coef = 0.0;
  double vf_coef = 0.5;
  double max_grad_norm = 0.5;

  bool operator==(const PpoConfig&) const = default;
};

struct A2cConfig {
  double learning_rate = 7e-4;
  std::int64_t n_steps = 5;
  double gamma = 0.99;
  double gae_lambda = 1.0;
  double ent_coef = 0.0;
  double vf_coef = 0.5;
  double max_grad_norm = 0.5;
  double rms_prop_eps = 1e-5;
  bool normalize_advantage = false;

  bool operator==(const A2cConfig&) const = default;
};

/// Monte-Carlo policy gradient; the tables give no values for it.
struct ReinforceConfig {
  double learning_rate = 3e-4;
  double value_learning_rate = 1e-3;
  double gamma = 0.99;
  bool baseline = true;

  bool operator==(const ReinforceConfig&) const = default;
};

struct AgentConfig {
  DqnConfig dqn;
  PpoConfig ppo;
  A2cConfig a2c;
  ReinforceConfig reinforce;
  std::string network = "standard";  // standard | smoke

  /// Unknown `dqn.`/`ppo.`/`a2c.`/`reinforce.` keys are rejected.
  static AgentConfig from(const KeyValueConfig& kv);
  void to(KeyValueConfig& kv) const;
  void validate() const;
  /// Shipped defaults file.
  static std::string defaults_path();

  bool operator==(const AgentConfig&) const = default;
};

}  // namespace pbge::agents
