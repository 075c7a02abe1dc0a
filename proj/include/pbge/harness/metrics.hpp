#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "pbge/env/config.hpp"
#include "pbge/obs/pipeline.hpp"

namespace pbge::harness {

struct EpisodeResult {
  double reward = 0.0;
  int length = 0;
  bool success = false;
};

/// Summary over evaluation episodes. Standard deviations are population
/// deviations; efficiency is mean reward over mean length.
struct Metrics {
  std::size_t episodes = 0;
  double mean_reward = 0.0;
  double reward_std = 0.0;
  double mean_length = 0.0;
  double length_std = 0.0;
  double success_rate = 0.0;
  double efficiency = 0.0;

  static Metrics from(std::span<const EpisodeResult> episodes);
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

using Policy = std::function<int(const Tensor& observation)>;

/// Plays one episode to termination or truncation from a fresh reset.
EpisodeResult run_episode(obs::ObservationEnv& env, const Policy& policy);

/// Episode i runs in its own environment seeded with seed + i.
Metrics evaluate(const Policy& policy, const env::EnvConfig& config, std::size_t episodes, std::uint64_t seed);

/// Uniform random actions; skips the observation pipeline. `action_counts`,
/// when given, receives the histogram of chosen actions.
Metrics random_baseline(const env::EnvConfig& config, std::size_t episodes, std::uint64_t seed,
                        std::vector<std::size_t>* action_counts = nullptr);

/// One evaluation point of a training run.
struct MetricsRow {
  std::uint64_t step = 0;
  Metrics eval;
  std::uint64_t train_episodes = 0;  // completed so far
  double train_mean_reward = 0.0;    // over the last 100 training episodes
  double train_mean_length = 0.0;
  double train_success_rate = 0.0;
  double loss = 0.0;
  std::uint64_t updates = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);

}  // namespace pbge::harness
