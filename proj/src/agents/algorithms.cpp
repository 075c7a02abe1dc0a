#include "pbge/agents/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pbge::agents {
namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + " is not finite");
}

// Single gradient step of `loss` on `net` using its optimizer.
double step(Network& net, OptimizerState& opt, const std::function<Tensor()>& build, double max_grad_norm = 0.0) {
  auto& params = net.parameters();
  zero_grads(params);
  Tape tape;
  double value = 0.0;
  {
    Tape::Scope scope(tape);
    Tensor loss = build();
    value = loss.item();
    check_finite(value, "loss");
    backward(tape, loss);
  }
  if (max_grad_norm > 0.0) check_finite(clip_grad_norm(params, max_grad_norm), "gradient norm");
  apply_gradients(params, opt);
  return value;
}

Tensor observation_batch(std::span<const Transition> ts, bool next) {
  std::vector<Tensor> obs;
  obs.reserve(ts.size());
  for (const auto& t : ts) obs.push_back(next ? t.next_state : t.state);
  return batch_of(obs);
}

std::vector<std::size_t> actions_of(std::span<const Transition> ts) {
  std::vector<std::size_t> a;
  for (const auto& t : ts) a.push_back(static_cast<std::size_t>(t.action));
  return a;
}

void require_complete(const Trajectory& trajectory) {
  if (trajectory.empty() || !trajectory.back().done()) {
    throw ContractViolation("policy-gradient update needs a complete episode");
  }
}

}  // namespace

// ---------------------------------------------------------------- DQN

std::vector<double> dqn_targets(const Network& online, const Network& target, const Batch& batch, double gamma,
                                bool double_dqn) {
  const Tensor q_target = target.forward(batch.next_states)[0];
  const std::size_t n_actions = q_target.dim(1);
  Tensor q_online;
  if (double_dqn) q_online = online.forward(batch.next_states)[0];
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.terminated[i]) {
      y[i] = batch.rewards[i];
      continue;
    }
    auto row = q_target.data().subspan(i * n_actions, n_actions);
    double bootstrap = 0.0;
    if (double_dqn) {
      bootstrap = row[argmax_index(q_online.data().subspan(i * n_actions, n_actions))];
    } else {
      bootstrap = *std::ranges::max_element(row);
    }
    y[i] = batch.rewards[i] + gamma * bootstrap;
  }
  return y;
}

Tensor dqn_loss(const Network& online, const Batch& batch, std::span<const double> targets) {
  const Tensor q = online.forward(batch.states)[0];
  const Tensor q_sa = gather(q, batch.actions);
  const Tensor y = Tensor::vector(std::vector<double>(targets.begin(), targets.end()));
  return mean(huber(q_sa - y));
}

double dqn_train_step(Network& online, const Network& target, ReplayBuffer& buffer, OptimizerState& opt,
                      const DqnConfig& config) {
  if (buffer.size() == 0) throw ContractViolation("dqn_train_step on an empty replay buffer");
  const Batch batch = buffer.sample(static_cast<std::size_t>(config.batch_size));
  const std::vector<double> y = dqn_targets(online, target, batch, config.gamma, config.double_dqn);
  return step(online, opt, [&] { return dqn_loss(online, batch, y); }, config.max_grad_norm);
}

// ---------------------------------------------------------------- TD

double semi_gradient_sarsa_step(Network& q, const Transition& t, int next_action, double alpha, double gamma) {
  t.validate(q.forward(batch_of(t.state))[0].dim(1));
  double bootstrap = 0.0;
  if (!t.terminated) bootstrap = q.forward(batch_of(t.next_state))[0][static_cast<std::size_t>(next_action)];
  auto& params = q.parameters();
  zero_grads(params);
  Tape tape;
  double q_sa = 0.0;
  {
    Tape::Scope scope(tape);
    const std::size_t a = static_cast<std::size_t>(t.action);
    Tensor out = sum(gather(q.forward(batch_of(t.state))[0], std::span<const std::size_t>(&a, 1)));
    q_sa = out.item();
    backward(tape, out);
  }
  const double delta = t.reward + gamma * bootstrap - q_sa;
  check_finite(delta, "TD error");
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += alpha * delta * g[i];
  }
  zero_grads(params);
  return delta;
}

// ---------------------------------------------------------------- policy gradient

std::vector<double> discounted_returns(const Trajectory& trajectory, double gamma) {
  std::vector<double> g(trajectory.size());
  double acc = 0.0;
  for (std::size_t t = trajectory.size(); t-- > 0;) {
    acc = trajectory[t].reward + gamma * acc;
    g[t] = acc;
  }
  return g;
}

namespace {

// -sum_t w_t ln pi(A_t | S_t)
Tensor weighted_log_prob_loss(const Network& policy, const Trajectory& trajectory, const std::vector<double>& weights) {
  const Tensor logits = policy.forward(observation_batch(trajectory, false))[0];
  const Tensor lp = gather(log_softmax(logits), actions_of(trajectory));
  return neg(sum(lp * Tensor::vector(weights)));
}

}  // namespace

double reinforce_update(const Trajectory& trajectory, Network& policy, OptimizerState& opt, double gamma) {
  require_complete(trajectory);
  const auto g = discounted_returns(trajectory, gamma);
  std::vector<double> w(g.size());
  double discount = 1.0;
  for (std::size_t t = 0; t < g.size(); ++t, discount *= gamma) w[t] = discount * g[t];
  return step(policy, opt, [&] { return weighted_log_prob_loss(policy, trajectory, w); });
}

double reinforce_baseline_update(const Trajectory& trajectory, Network& policy, Network& value, OptimizerState& policy_opt,
                               OptimizerState& value_opt, double gamma) {
  require_complete(trajectory);
  const auto g = discounted_returns(trajectory, gamma);
  const Tensor states = observation_batch(trajectory, false);
  const Tensor v = value.forward(states)[0];
  std::vector<double> delta(g.size()), w(g.size());
  double discount = 1.0;
  for (std::size_t t = 0; t < g.size(); ++t, discount *= gamma) {
    delta[t] = g[t] - v[t];
    w[t] = discount * delta[t];
  }
  step(value, value_opt, [&] { return neg(sum(sum_last(value.forward(states)[0]) * Tensor::vector(delta))); });
  return step(policy, policy_opt, [&] { return weighted_log_prob_loss(policy, trajectory, w); });
}

double sarsa_actor_critic_step(Network& q, Network& policy, const Transition& t, int next_action, OptimizerState& q_opt,
                               OptimizerState& policy_opt, double gamma, double I) {
  t.validate();
  const std::size_t a = static_cast<std::size_t>(t.action);
  const Tensor s = batch_of(t.state);
  double bootstrap = 0.0;
  if (!t.terminated) bootstrap = q.forward(batch_of(t.next_state))[0][static_cast<std::size_t>(next_action)];
  const double delta = t.reward + gamma * bootstrap - q.forward(s)[0][a];
  check_finite(delta, "TD error");
  step(q, q_opt, [&] { return scale(sum(gather(q.forward(s)[0], std::span<const std::size_t>(&a, 1))), -delta); });
  step(policy, policy_opt, [&] {
    return scale(sum(gather(log_softmax(policy.forward(s)[0]), std::span<const std::size_t>(&a, 1))), -I * delta);
  });
  return gamma * I;
}

// ---------------------------------------------------------------- actor-critic

double PolicyEval::log_prob(std::size_t a) const { return std::log(probs.at(a)); }

PolicyEval evaluate_policy(const Network& ac, const Tensor& observation) {
  const auto out = ac.forward(batch_of(observation));
  PolicyEval e;
  e.probs = softmax_probs(out[0].data());
  e.value = out.size() > 1 ? out[1][0] : 0.0;
  return e;
}

double critic_value(const Network& ac, const Tensor& observation) {
  return ac.head(1, ac.features(batch_of(observation)))[0];
}

namespace {

struct AcTerms {
  Tensor log_probs;  // [B] of the taken actions
  Tensor values;     // [B]
  Tensor entropy;    // scalar mean entropy
};

AcTerms actor_critic_terms(const Network& ac, const Tensor& states, std::span<const std::size_t> actions,
                           bool with_entropy) {
  const Tensor f = ac.features(states);
  const Tensor lsm = log_softmax(ac.head(0, f));
  AcTerms t;
  t.log_probs = gather(lsm, actions);
  t.values = sum_last(ac.head(1, f));
  if (with_entropy) t.entropy = neg(scale(sum(exp(lsm) * lsm), 1.0 / static_cast<double>(actions.size())));
  return t;
}

}  // namespace

UpdateStats a2c_train_step(Network& ac, RolloutBuffer& rollout, OptimizerState& opt, const A2cConfig& cfg) {
  if (rollout.empty()) throw ContractViolation("a2c_train_step on an empty rollout");
  if (!rollout.closed()) {
    rollout.close(cfg.gamma, cfg.gae_lambda, [&](const Tensor& o) { return critic_value(ac, o); });
  }
  std::vector<Transition> ts;
  for (const auto& e : rollout.entries()) ts.push_back(e.transition);
  std::vector<double> adv = rollout.advantages();
  if (cfg.normalize_advantage && adv.size() > 1) normalize_advantages(adv);
  const Tensor states = observation_batch(ts, false);
  const auto actions = actions_of(ts);
  const Tensor A = Tensor::vector(adv);
  const Tensor R = Tensor::vector(rollout.returns());
  UpdateStats st;
  const bool with_entropy = cfg.ent_coef != 0.0;
  auto& params = ac.parameters();
  zero_grads(params);
  Tape tape;
  {
    Tape::Scope scope(tape);
    AcTerms t = actor_critic_terms(ac, states, actions, with_entropy);
    Tensor policy_loss = neg(mean(A * t.log_probs));
    Tensor value_loss = mean(square(R - t.values));
    Tensor loss = policy_loss + scale(value_loss, cfg.vf_coef);
    if (with_entropy) {
      loss = loss - scale(t.entropy, cfg.ent_coef);
      st.entropy = t.entropy.item();
    }
    st.policy_loss = policy_loss.item();
    st.value_loss = value_loss.item();
    st.loss = loss.item();
    check_finite(st.loss, "a2c loss");
    backward(tape, loss);
  }
  st.grad_norm = clip_grad_norm(params, cfg.max_grad_norm);
  check_finite(st.grad_norm, "a2c gradient norm");
  apply_gradients(params, opt);
  st.minibatches = 1;
  rollout.clear();
  return st;
}

double ppo_clip_objective(double ratio, double advantage, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractViolation("ppo clip epsilon must be positive");
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mu = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mu) * (a - mu);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mu) / (sd + 1e-8);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

UpdateStats ppo_train_step(Network& ac, RolloutBuffer& rollout, OptimizerState& opt, const PpoConfig& cfg, Rng& rng) {
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  if (rollout.size() < batch_size) {
    throw ContractViolation("ppo_train_step needs at least batch_size (" + std::to_string(batch_size) + ") transitions, got " +
                            std::to_string(rollout.size()));
  }
  if (!rollout.closed()) {
    rollout.close(cfg.gamma, cfg.gae_lambda, [&](const Tensor& o) { return critic_value(ac, o); });
  }
  const auto& entries = rollout.entries();
  const auto& all_adv = rollout.advantages();
  const auto& all_ret = rollout.returns();
  const std::size_t n = entries.size();
  const Shape& obs_shape = entries.front().transition.state.shape();
  const std::size_t obs_size = shape_size(obs_shape);
  const bool with_entropy = cfg.ent_coef != 0.0;
  auto& params = ac.parameters();

  UpdateStats st;
  std::size_t clipped = 0, counted = 0;
  for (std::int64_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      const std::size_t b = end - start;
      Shape bs{b};
      bs.insert(bs.end(), obs_shape.begin(), obs_shape.end());
      Tensor states(bs);
      std::vector<std::size_t> actions(b);
      std::vector<double> adv(b), ret(b), old_lp(b), old_v(b);
      for (std::size_t k = 0; k < b; ++k) {
        const auto& e = entries[order[start + k]];
        std::ranges::copy(e.transition.state.data(), states.data().begin() + static_cast<long>(k * obs_size));
        actions[k] = static_cast<std::size_t>(e.transition.action);
        adv[k] = all_adv[order[start + k]];
        ret[k] = all_ret[order[start + k]];
        old_lp[k] = e.log_prob;
        old_v[k] = e.value;
      }
      if (cfg.normalize_advantage && b > 1) normalize_advantages(adv);
      const Tensor A = Tensor::vector(adv);

      zero_grads(params);
      Tape tape;
      {
        Tape::Scope scope(tape);
        AcTerms t = actor_critic_terms(ac, states, actions, with_entropy);
        const Tensor ratio = exp(t.log_probs - Tensor::vector(old_lp));
        const Tensor surrogate = minimum(ratio * A, clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * A);
        Tensor policy_loss = neg(mean(surrogate));
        Tensor v = t.values;
        if (cfg.clip_range_vf) {
          const Tensor ov = Tensor::vector(old_v);
          v = ov + clip(v - ov, -*cfg.clip_range_vf, *cfg.clip_range_vf);
        }
        Tensor value_loss = mean(square(Tensor::vector(ret) - v));
        Tensor loss = policy_loss + scale(value_loss, cfg.vf_coef);
        if (with_entropy) {
          loss = loss - scale(t.entropy, cfg.ent_coef);
          st.entropy = t.entropy.item();
        }
        if (st.minibatches == 0) st.first_surrogate = -policy_loss.item();
        for (double r : ratio.data()) clipped += std::abs(r - 1.0) > cfg.clip_range;
        counted += b;
        st.policy_loss = policy_loss.item();
        st.value_loss = value_loss.item();
        st.loss = loss.item();
        check_finite(st.loss, "ppo loss");
        backward(tape, loss);
      }
      st.grad_norm = clip_grad_norm(params, cfg.max_grad_norm);
      check_finite(st.grad_norm, "ppo gradient norm");
      apply_gradients(params, opt);
      ++st.minibatches;
    }
  }
  st.clip_fraction = counted ? static_cast<double>(clipped) / static_cast<double>(counted) : 0.0;
  rollout.clear();
  return st;
}

}  // namespace pbge::agents
