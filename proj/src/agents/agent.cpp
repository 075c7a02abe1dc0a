#include "pbge/agents/agent.hpp"

#include <cmath>

namespace pbge::agents {

void Agent::record_update(double loss) {
  if (!std::isfinite(loss)) throw NumericalError(algo() + " update produced a non-finite loss");
  last_loss_ = loss;
  ++updates_;
}

void Agent::save(TensorArchive& ar) const {
  ar.put_text("agent.algo", algo());
  ar.put_u64("agent.steps", steps_);
  ar.put_u64("agent.updates", updates_);
  ar.put_doubles("agent.last_loss", {last_loss_});
  ar.put_rng("agent.rng", rng_);
}

void Agent::load(const TensorArchive& ar) {
  const std::string stored = ar.get_text("agent.algo");
  if (stored != algo()) throw FormatError("checkpoint holds a " + stored + " agent, expected " + algo());
  steps_ = ar.get_u64("agent.steps");
  updates_ = ar.get_u64("agent.updates");
  last_loss_ = ar.get_doubles("agent.last_loss").at(0);
  ar.get_rng("agent.rng", rng_);
}

std::unique_ptr<Agent> make_agent(const std::string& algo, const AgentConfig& config, const NetArch& arch,
                                  std::uint64_t seed, std::uint64_t total_timesteps) {
  if (algo == "dqn" || algo == "double_dqn") {
    DqnConfig d = config.dqn;
    if (algo == "double_dqn") d.double_dqn = true;
    return std::make_unique<DqnAgent>(d, arch, seed, total_timesteps);
  }
  if (algo == "a2c") return std::make_unique<ActorCriticAgent>(ActorCriticAgent::Kind::a2c, config, arch, seed);
  if (algo == "ppo") return std::make_unique<ActorCriticAgent>(ActorCriticAgent::Kind::ppo, config, arch, seed);
  if (algo == "reinforce") return std::make_unique<ReinforceAgent>(config.reinforce, arch, seed);
  throw ConfigError("unknown algorithm '" + algo + "' (expected dqn, double_dqn, a2c, ppo or reinforce)");
}

namespace {

Network init_net(std::uint64_t seed, const NetArch& arch, std::vector<std::size_t> heads) {
  Rng rng(seed);
  return Network(arch, std::move(heads), rng);
}

int greedy_q(const Network& net, const Tensor& obs) {
  return static_cast<int>(argmax_index(net.forward(batch_of(obs))[0].data()));
}

int greedy_policy(const Network& net, const Tensor& obs) {
  return static_cast<int>(argmax_index(net.head(0, net.features(batch_of(obs))).data()));
}

}  // namespace

// ---------------------------------------------------------------- DQN

DqnAgent::DqnAgent(const DqnConfig& config, const NetArch& arch, std::uint64_t seed, std::uint64_t total_timesteps)
    : Agent(seed),
      config_(config),
      online_(init_net(seed ^ 0x9e3779b97f4a7c15ULL, arch, {4})),
      target_(online_.clone()),
      buffer_(static_cast<std::size_t>(config.buffer_size), arch.input_shape(), seed ^ 0xbf58476d1ce4e5b9ULL),
      opt_(OptimizerState::adam(config.learning_rate)),
      schedule_{config.exploration_initial_eps, config.exploration_final_eps, config.exploration_fraction,
                total_timesteps},
      obs_shape_(arch.input_shape()) {}

int DqnAgent::act(const Tensor& obs) {
  const double u = uniform01(rng_);
  if (u < schedule_.value(steps_)) return static_cast<int>(uniform_index(rng_, 4));
  return greedy(obs);
}

int DqnAgent::greedy(const Tensor& obs) const { return greedy_q(online_, obs); }

void DqnAgent::observe(const Transition& t) {
  buffer_.add(t);
  ++steps_;
  if (steps_ >= static_cast<std::uint64_t>(config_.learning_starts) &&
      steps_ % static_cast<std::uint64_t>(config_.train_freq) == 0) {
    record_update(dqn_train_step(online_, target_, buffer_, opt_, config_));
  }
  if (steps_ % static_cast<std::uint64_t>(config_.target_update_interval) == 0) target_.copy_from(online_);
}

void DqnAgent::save(TensorArchive& ar) const {
  Agent::save(ar);
  online_.save(ar, "dqn.online");
  target_.save(ar, "dqn.target");
  save_optimizer(ar, "dqn.opt", opt_);
  buffer_.save(ar, "dqn.replay");
}

void DqnAgent::load(const TensorArchive& ar) {
  Agent::load(ar);
  online_.load(ar, "dqn.online");
  target_.load(ar, "dqn.target");
  opt_ = load_optimizer(ar, "dqn.opt");
  buffer_.load(ar, "dqn.replay");
}

// ---------------------------------------------------------------- A2C / PPO

ActorCriticAgent::ActorCriticAgent(Kind kind, const AgentConfig& config, const NetArch& arch, std::uint64_t seed)
    : Agent(seed),
      kind_(kind),
      a2c_(config.a2c),
      ppo_(config.ppo),
      net_(init_net(seed ^ 0x9e3779b97f4a7c15ULL, arch, {4, 1})),
      opt_(kind == Kind::a2c ? OptimizerState::rmsprop(config.a2c.learning_rate, 0.99, config.a2c.rms_prop_eps)
                             : OptimizerState::adam(config.ppo.learning_rate, 0.9, 0.999, 1e-5)),
      obs_shape_(arch.input_shape()) {}

int ActorCriticAgent::act(const Tensor& obs) {
  pending_ = evaluate_policy(net_, obs);
  return static_cast<int>(sample_categorical(pending_.probs, rng_));
}

int ActorCriticAgent::greedy(const Tensor& obs) const { return greedy_policy(net_, obs); }

void ActorCriticAgent::observe(const Transition& t) {
  if (pending_.probs.empty()) throw ContractViolation("observe called without a preceding act");
  rollout_.add(t, pending_.log_prob(static_cast<std::size_t>(t.action)), pending_.value);
  pending_ = {};
  ++steps_;
  if (kind_ == Kind::a2c) {
    if (rollout_.size() >= static_cast<std::size_t>(a2c_.n_steps) || t.done()) {
      stats_ = a2c_train_step(net_, rollout_, opt_, a2c_);
      record_update(stats_.loss);
    }
  } else if (rollout_.size() >= static_cast<std::size_t>(ppo_.n_steps)) {
    stats_ = ppo_train_step(net_, rollout_, opt_, ppo_, rng_);
    record_update(stats_.loss);
  }
}

void ActorCriticAgent::save(TensorArchive& ar) const {
  Agent::save(ar);
  net_.save(ar, "ac.net");
  save_optimizer(ar, "ac.opt", opt_);
  rollout_.save(ar, "ac.rollout");
}

void ActorCriticAgent::load(const TensorArchive& ar) {
  Agent::load(ar);
  net_.load(ar, "ac.net");
  opt_ = load_optimizer(ar, "ac.opt");
  rollout_.load(ar, "ac.rollout", obs_shape_);
  pending_ = {};
}

// ---------------------------------------------------------------- REINFORCE

ReinforceAgent::ReinforceAgent(const ReinforceConfig& config, const NetArch& arch, std::uint64_t seed)
    : Agent(seed),
      config_(config),
      policy_(init_net(seed ^ 0x9e3779b97f4a7c15ULL, arch, {4})),
      value_(init_net(seed ^ 0x94d049bb133111ebULL, arch, {1})),
      policy_opt_(OptimizerState::adam(config.learning_rate)),
      value_opt_(OptimizerState::adam(config.value_learning_rate)),
      obs_shape_(arch.input_shape()) {}

int ReinforceAgent::act(const Tensor& obs) {
  const auto probs = softmax_probs(policy_.forward(batch_of(obs))[0].data());
  return static_cast<int>(sample_categorical(probs, rng_));
}

int ReinforceAgent::greedy(const Tensor& obs) const { return greedy_q(policy_, obs); }

void ReinforceAgent::observe(const Transition& t) {
  episode_.add(t, 0.0, 0.0);
  ++steps_;
  if (!t.done()) return;
  Trajectory traj;
  for (const auto& e : episode_.entries()) traj.push_back(e.transition);
  episode_.clear();
  record_update(config_.baseline
                    ? reinforce_baseline_update(traj, policy_, value_, policy_opt_, value_opt_, config_.gamma)
                    : reinforce_update(traj, policy_, policy_opt_, config_.gamma));
}

void ReinforceAgent::save(TensorArchive& ar) const {
  Agent::save(ar);
  policy_.save(ar, "reinforce.policy");
  value_.save(ar, "reinforce.value");
  save_optimizer(ar, "reinforce.policy_opt", policy_opt_);
  save_optimizer(ar, "reinforce.value_opt", value_opt_);
  episode_.save(ar, "reinforce.episode");
}

void ReinforceAgent::load(const TensorArchive& ar) {
  Agent::load(ar);
  policy_.load(ar, "reinforce.policy");
  value_.load(ar, "reinforce.value");
  policy_opt_ = load_optimizer(ar, "reinforce.policy_opt");
  value_opt_ = load_optimizer(ar, "reinforce.value_opt");
  episode_.load(ar, "reinforce.episode", obs_shape_);
}

}  // namespace pbge::agents
