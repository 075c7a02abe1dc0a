#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pbge/agents/config.hpp"
#include "pbge/agents/network.hpp"
#include "pbge/config.hpp"
#include "pbge/env/config.hpp"

namespace pbge::harness {

/// An experiment: environment, evaluation environment, agent settings and
/// schedule. Recipe files are key-value configs:
///
///   name, algorithms (comma list), total_timesteps, eval_every,
///   eval_episodes, final_episodes, ci_runnable
///   env.<key>    training environment
///   eval.<key>   evaluation environment overrides on top of env.*
///   agent.<key>  agent hyperparameter overrides
///   smoke.<any of the above>   applied by the smoke profile
struct Recipe {
  std::string name;
  std::vector<std::string> algorithms;
  std::uint64_t total_timesteps = 1'000'000;
  std::uint64_t eval_every = 10'000;
  std::size_t eval_episodes = 5;
  std::size_t final_episodes = 100;
  bool ci_runnable = false;
  env::EnvConfig env;
  env::EnvConfig eval_env;
  agents::AgentConfig agent;

  static Recipe from(const KeyValueConfig& kv, const std::string& profile = "full");
  /// `name_or_path` is a shipped recipe name (I ... VI, eased) or a file.
  static Recipe load(const std::string& name_or_path, const std::string& profile = "full");

  /// Fully expanded form; from(resolved(), "full") reproduces this recipe.
  KeyValueConfig resolved() const;

  /// Network for this recipe's observations.
  agents::NetArch arch() const;

  friend bool operator==(const Recipe& a, const Recipe& b) { return a.resolved().entries() == b.resolved().entries(); }
};

std::string recipes_dir();
std::vector<std::string> shipped_recipes();

}  // namespace pbge::harness
