#pragma once

#include <memory>
#include <string>

#include "pbge/agents/algorithms.hpp"

namespace pbge::agents {

/// Learner driven one environment step at a time by the training loop.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual std::string algo() const = 0;
  /// Behaviour action; may explore and advances the agent's generator.
  virtual int act(const Tensor& observation) = 0;
  /// Deterministic action: argmax of Q or of the policy probabilities.
  virtual int greedy(const Tensor& observation) const = 0;
  /// Records the outcome of the last `act` and learns when an update is due.
  virtual void observe(const Transition& t) = 0;

  virtual void save(TensorArchive& archive) const;
  virtual void load(const TensorArchive& archive);

  std::uint64_t steps() const { return steps_; }
  std::uint64_t updates() const { return updates_; }
  double last_loss() const { return last_loss_; }

 protected:
  Agent(std::uint64_t seed) : rng_(seed) {}
  void record_update(double loss);

  Rng rng_;
  std::uint64_t steps_ = 0;
  std::uint64_t updates_ = 0;
  double last_loss_ = 0.0;
};

/// `algo` is one of dqn, a2c, ppo, reinforce. `total_timesteps` sets the
/// exploration schedule horizon.
std::unique_ptr<Agent> make_agent(const std::string& algo, const AgentConfig& config, const NetArch& arch,
                                  std::uint64_t seed, std::uint64_t total_timesteps);

class DqnAgent : public Agent {
 public:
  DqnAgent(const DqnConfig& config, const NetArch& arch, std::uint64_t seed, std::uint64_t total_timesteps);
  std::string algo() const override { return config_.double_dqn ? "double_dqn" : "dqn"; }
  int act(const Tensor& observation) override;
  int greedy(const Tensor& observation) const override;
  void observe(const Transition& t) override;
  void save(TensorArchive& archive) const override;
  void load(const TensorArchive& archive) override;

  const Network& online() const { return online_; }
  const Network& target() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  double epsilon() const { return schedule_.value(steps_); }

 private:
  DqnConfig config_;
  Network online_, target_;
  ReplayBuffer buffer_;
  OptimizerState opt_;
  EpsilonSchedule schedule_;
  Shape obs_shape_;
};

/// Shared by A2C and PPO: sample from the actor, learn from a rollout.
class ActorCriticAgent : public Agent {
 public:
  enum class Kind { a2c, ppo };
  ActorCriticAgent(Kind kind, const AgentConfig& config, const NetArch& arch, std::uint64_t seed);
  std::string algo() const override { return kind_ == Kind::a2c ? "a2c" : "ppo"; }
  int act(const Tensor& observation) override;
  int greedy(const Tensor& observation) const override;
  void observe(const Transition& t) override;
  void save(TensorArchive& archive) const override;
  void load(const TensorArchive& archive) override;

  const Network& network() const { return net_; }
  const UpdateStats& last_stats() const { return stats_; }

 private:
  Kind kind_;
  A2cConfig a2c_;
  PpoConfig ppo_;
  Network net_;
  OptimizerState opt_;
  RolloutBuffer rollout_;
  Shape obs_shape_;
  PolicyEval pending_;
  UpdateStats stats_;
};

/// Monte-Carlo policy gradient with an optional learned baseline.
class ReinforceAgent : public Agent {
 public:
  ReinforceAgent(const ReinforceConfig& config, const NetArch& arch, std::uint64_t seed);
  std::string algo() const override { return "reinforce"; }
  int act(const Tensor& observation) override;
  int greedy(const Tensor& observation) const override;
  void observe(const Transition& t) override;
  void save(TensorArchive& archive) const override;
  void load(const TensorArchive& archive) override;

  const Network& policy() const { return policy_; }

 private:
  ReinforceConfig config_;
  Network policy_, value_;
  OptimizerState policy_opt_, value_opt_;
  RolloutBuffer episode_;
  Shape obs_shape_;
};

}  // namespace pbge::agents
