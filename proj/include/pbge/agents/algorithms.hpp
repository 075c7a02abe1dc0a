#pragma once

#include <stdexcept>
#include <vector>

#include "pbge/agents/buffers.hpp"
#include "pbge/agents/config.hpp"
#include "pbge/agents/network.hpp"
#include "pbge/tensor/optim.hpp"

namespace pbge::agents {

/// A loss or parameter went non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- DQN

/// Bootstrap targets: R on terminated rows, otherwise R + gamma * max_a q_target(S', a),
/// or q_target(S', argmax_a q_online(S', a)) with double_dqn.
std::vector<double> dqn_targets(const Network& online, const Network& target, const Batch& batch, double gamma,
                                bool double_dqn);

/// Mean Huber loss of q(S, A) - y: quadratic inside [-1, 1], so each TD error
/// enters the gradient clipped to that interval.
Tensor dqn_loss(const Network& online, const Batch& batch, std::span<const double> targets);

/// One gradient step on a uniformly sampled minibatch. Returns the loss.
double dqn_train_step(Network& online, const Network& target, ReplayBuffer& buffer, OptimizerState& opt,
                      const DqnConfig& config);

// ---------------------------------------------------------------- tabular-style TD

/// w += alpha * (R + gamma q(S', A') - q(S, A)) * grad q(S, A); the bootstrap is
/// dropped on terminated transitions. Returns the TD error.
double semi_gradient_sarsa_step(Network& q, const Transition& t, int next_action, double alpha, double gamma);

// ---------------------------------------------------------------- policy gradient

using Trajectory = std::vector<Transition>;

/// Discounted tail sums G_t.
std::vector<double> discounted_returns(const Trajectory& trajectory, double gamma);

/// Applies sum_t gamma^t G_t grad ln pi(A_t | S_t) as one optimizer step,
/// every term evaluated at the episode-start parameters. Returns the policy loss.
double reinforce_update(const Trajectory& trajectory, Network& policy, OptimizerState& opt, double gamma);

/// delta_t = G_t - v(S_t); value step along sum_t delta_t grad v(S_t), policy
/// step along sum_t gamma^t delta_t grad ln pi(A_t | S_t).
double reinforce_baseline_update(const Trajectory& trajectory, Network& policy, Network& value, OptimizerState& policy_opt,
                               OptimizerState& value_opt, double gamma);

/// One online step of SARSA(0) actor-critic. Returns gamma * I.
double sarsa_actor_critic_step(Network& q, Network& policy, const Transition& t, int next_action, OptimizerState& q_opt,
                               OptimizerState& policy_opt, double gamma, double I);

// ---------------------------------------------------------------- actor-critic

struct PolicyEval {
  std::vector<double> probs;
  double log_prob(std::size_t a) const;
  double value = 0.0;
};

/// Actor probabilities and critic value for one observation.
PolicyEval evaluate_policy(const Network& actor_critic, const Tensor& observation);
double critic_value(const Network& actor_critic, const Tensor& observation);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double first_surrogate = 0.0;  // PPO: surrogate of the first minibatch
  double clip_fraction = 0.0;    // PPO: share of ratios outside the clip interval
  std::size_t minibatches = 0;
};

/// Closes the rollout with GAE(gamma, lambda), takes one joint step, clears it.
UpdateStats a2c_train_step(Network& actor_critic, RolloutBuffer& rollout, OptimizerState& opt, const A2cConfig& config);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double ppo_clip_objective(double ratio, double advantage, double epsilon = 0.2);

/// Zero mean, unit variance (std floored by 1e-8).
void normalize_advantages(std::span<double> advantages);

/// n_epochs passes of shuffled minibatches over the closed rollout, then clears it.
UpdateStats ppo_train_step(Network& actor_critic, RolloutBuffer& rollout, OptimizerState& opt, const PpoConfig& config,
                           Rng& rng);

/// Fisher-Yates with the shared generator.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace pbge::agents
