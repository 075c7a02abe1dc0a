#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbge/agents/agent.hpp"
#include "pbge/harness/metrics.hpp"
#include "pbge/harness/recipe.hpp"

namespace pbge::harness {

/// Training stopped on a non-finite loss; a diagnostic dump was written.
class RunAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output directory is unusable.
class StartupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  std::string algo = "ppo";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> total_timesteps;  // recipe value when unset
  std::optional<std::uint64_t> stop_after;       // simulated interruption: checkpoint and return
  std::optional<std::size_t> final_episodes;     // recipe value when unset
  bool checkpoints = true;
  bool save_frames = false;
  bool final_report = true;
  /// Checked after each evaluation row; returning true ends the run early.
  std::function<bool(const MetricsRow&)> stop_when;
  std::ostream* log = nullptr;
};

struct RunResult {
  std::string dir;
  std::vector<MetricsRow> rows;
  std::uint64_t steps = 0;
  bool finished = false;
  std::optional<Metrics> final_metrics;
  std::optional<Metrics> baseline;
};

/// Run directory layout:
///   run.cfg             resolved recipe plus run.* settings
///   metrics.csv         one row per evaluation point
///   checkpoints/latest.ckpt
///   frames/             optional debug frames
///   final_report/       summary.csv, per-metric CSV and SVG
///   diagnostics/        written when a run aborts
RunResult train(const Recipe& recipe, const TrainOptions& options, const std::string& out_dir);

/// Continues a run from its latest checkpoint with the settings in run.cfg.
RunResult resume(const std::string& run_dir, std::optional<std::uint64_t> stop_after = std::nullopt,
                 std::ostream* log = nullptr);

/// Seeds derived from the run seed.
std::uint64_t train_env_seed(const Recipe& recipe, std::uint64_t run_seed);
std::uint64_t eval_env_seed(const Recipe& recipe, std::uint64_t run_seed);

struct LoadedCheckpoint {
  Recipe recipe;
  std::string algo;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::unique_ptr<agents::Agent> agent;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Greedy evaluation of a checkpoint on its recipe's evaluation environment.
Metrics evaluate_checkpoint(const std::string& path, std::size_t episodes);

}  // namespace pbge::harness
