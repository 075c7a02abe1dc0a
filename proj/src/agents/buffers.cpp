#include "pbge/agents/buffers.hpp"

#include <algorithm>
#include <cmath>

namespace pbge::agents {

void Transition::validate(std::size_t actions) const {
  if (action < 0 || static_cast<std::size_t>(action) >= actions) {
    throw ContractViolation("transition action " + std::to_string(action) + " outside [0, " + std::to_string(actions) + ")");
  }
  if (terminated && truncated) throw ContractViolation("transition both terminated and truncated");
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, Shape observation_shape, std::uint64_t seed)
    : capacity_(capacity), shape_(std::move(observation_shape)), obs_bytes_(shape_size(shape_)), rng_(seed) {
  if (capacity_ == 0) throw ContractViolation("replay buffer capacity must be positive");
}

void ReplayBuffer::encode(const Tensor& obs, std::uint8_t* dst) const {
  if (obs.shape() != shape_) {
    throw ShapeError("replay buffer stores " + shape_string(shape_) + ", got " + shape_string(obs.shape()));
  }
  auto src = obs.data();
  for (std::size_t i = 0; i < obs_bytes_; ++i) {
    dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(src[i] * 255.0), 0L, 255L));
  }
}

void ReplayBuffer::decode(const std::uint8_t* src, double* dst) const {
  for (std::size_t i = 0; i < obs_bytes_; ++i) dst[i] = src[i] / 255.0;
}

void ReplayBuffer::add(const Transition& t) {
  t.validate();
  if (states_.size() < capacity_ * obs_bytes_ && head_ * obs_bytes_ == states_.size()) {
    states_.resize(states_.size() + obs_bytes_);
    next_states_.resize(next_states_.size() + obs_bytes_);
    actions_.push_back(0);
    rewards_.push_back(0.0);
    flags_.push_back(0);
  }
  encode(t.state, states_.data() + head_ * obs_bytes_);
  encode(t.next_state, next_states_.data() + head_ * obs_bytes_);
  actions_[head_] = t.action;
  rewards_[head_] = t.reward;
  flags_[head_] = static_cast<std::uint8_t>((t.terminated ? 1 : 0) | (t.truncated ? 2 : 0));
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ContractViolation("replay index out of range");
  const std::size_t s = slot(i);
  Transition t;
  t.state = Tensor(shape_);
  t.next_state = Tensor(shape_);
  decode(states_.data() + s * obs_bytes_, t.state.data().data());
  decode(next_states_.data() + s * obs_bytes_, t.next_state.data().data());
  t.action = actions_[s];
  t.reward = rewards_[s];
  t.terminated = flags_[s] & 1;
  t.truncated = flags_[s] & 2;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size) {
  if (size_ == 0) throw ContractViolation("sample from an empty replay buffer");
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = uniform_index(rng_, size_);
  return idx;
}

Batch ReplayBuffer::sample(std::size_t batch_size) {
  const auto idx = sample_indices(batch_size);
  return gather(idx);
}

Batch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
  Shape bs{indices.size()};
  bs.insert(bs.end(), shape_.begin(), shape_.end());
  Batch b;
  b.states = Tensor(bs);
  b.next_states = Tensor(bs);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size_) throw ContractViolation("replay index out of range");
    const std::size_t s = slot(indices[k]);
    decode(states_.data() + s * obs_bytes_, b.states.data().data() + k * obs_bytes_);
    decode(next_states_.data() + s * obs_bytes_, b.next_states.data().data() + k * obs_bytes_);
    b.actions.push_back(static_cast<std::size_t>(actions_[s]));
    b.rewards.push_back(rewards_[s]);
    b.terminated.push_back(flags_[s] & 1);
    b.truncated.push_back(flags_[s] & 2);
  }
  return b;
}

void ReplayBuffer::save(TensorArchive& ar, const std::string& prefix) const {
  ar.put_u64(prefix + ".head", head_);
  ar.put_u64(prefix + ".size", size_);
  ar.put_bytes(prefix + ".states", states_);
  ar.put_bytes(prefix + ".next_states", next_states_);
  ar.put_doubles(prefix + ".actions", std::vector<double>(actions_.begin(), actions_.end()));
  ar.put_doubles(prefix + ".rewards", rewards_);
  ar.put_bytes(prefix + ".flags", flags_);
  ar.put_rng(prefix + ".rng", rng_);
}

void ReplayBuffer::load(const TensorArchive& ar, const std::string& prefix) {
  head_ = ar.get_u64(prefix + ".head");
  size_ = ar.get_u64(prefix + ".size");
  states_ = ar.get_bytes(prefix + ".states");
  next_states_ = ar.get_bytes(prefix + ".next_states");
  const auto a = ar.get_doubles(prefix + ".actions");
  actions_.assign(a.begin(), a.end());
  rewards_ = ar.get_doubles(prefix + ".rewards");
  flags_ = ar.get_bytes(prefix + ".flags");
  ar.get_rng(prefix + ".rng", rng_);
  const std::size_t stored = actions_.size();
  if (size_ > capacity_ || stored < size_ || states_.size() != stored * obs_bytes_ ||
      next_states_.size() != stored * obs_bytes_ || rewards_.size() != stored || flags_.size() != stored) {
    throw FormatError("replay buffer '" + prefix + "' is inconsistent with its capacity or observation shape");
  }
}

// ---------------------------------------------------------------------------

GaeResult compute_gae(std::span<const RolloutEntry> rollout, double gamma, double lambda, const ValueFn& value_fn) {
  const std::size_t n = rollout.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double carry = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const Transition& t = rollout[k].transition;
    double next_value = 0.0;
    bool chain = false;
    if (t.terminated) {
      next_value = 0.0;
    } else if (t.truncated || k + 1 == n) {
      next_value = value_fn(t.next_state);
    } else {
      next_value = rollout[k + 1].value;
      chain = true;
    }
    const double delta = t.reward + gamma * next_value - rollout[k].value;
    carry = delta + (chain ? gamma * lambda * carry : 0.0);
    out.advantages[k] = carry;
    out.returns[k] = carry + rollout[k].value;
  }
  return out;
}

void RolloutBuffer::add(Transition t, double log_prob, double value) {
  if (closed_) throw ContractViolation("rollout buffer is closed; clear it before adding");
  t.validate();
  entries_.push_back({std::move(t), log_prob, value});
}

void RolloutBuffer::close(double gamma, double lambda, const ValueFn& value_fn) {
  if (entries_.empty()) throw ContractViolation("closing an empty rollout");
  gae_ = compute_gae(entries_, gamma, lambda, value_fn);
  closed_ = true;
}

const std::vector<double>& RolloutBuffer::advantages() const {
  if (!closed_) throw ContractViolation("advantages requested before the segment was closed");
  return gae_.advantages;
}

const std::vector<double>& RolloutBuffer::returns() const {
  if (!closed_) throw ContractViolation("returns requested before the segment was closed");
  return gae_.returns;
}

void RolloutBuffer::clear() {
  entries_.clear();
  gae_ = {};
  closed_ = false;
}

namespace {

// Pipeline observations are multiples of 1/255 and round-trip through bytes.
bool byte_exact(const Tensor& t) {
  for (double v : t.data()) {
    const long k = std::lround(v * 255.0);
    if (k < 0 || k > 255 || static_cast<double>(k) / 255.0 != v) return false;
  }
  return true;
}

}  // namespace

void RolloutBuffer::save(TensorArchive& ar, const std::string& prefix) const {
  if (closed_) throw ContractViolation("saving a closed rollout");
  ar.put_u64(prefix + ".size", entries_.size());
  bool compact = true;
  for (const auto& e : entries_) compact = compact && byte_exact(e.transition.state) && byte_exact(e.transition.next_state);
  ar.put_u64(prefix + ".compact", compact ? 1 : 0);
  std::vector<double> scalars;
  std::vector<std::uint8_t> bytes;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (compact) {
      for (const Tensor* t : {&e.transition.state, &e.transition.next_state}) {
        for (double v : t->data()) bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    } else {
      ar.put(prefix + ".s" + std::to_string(i), e.transition.state);
      ar.put(prefix + ".n" + std::to_string(i), e.transition.next_state);
    }
    scalars.insert(scalars.end(), {static_cast<double>(e.transition.action), e.transition.reward,
                                   e.transition.terminated ? 1.0 : 0.0, e.transition.truncated ? 1.0 : 0.0, e.log_prob,
                                   e.value});
  }
  if (compact) ar.put_bytes(prefix + ".observations", bytes);
  ar.put_doubles(prefix + ".scalars", scalars);
}

void RolloutBuffer::load(const TensorArchive& ar, const std::string& prefix, const Shape& observation_shape) {
  clear();
  const auto n = ar.get_u64(prefix + ".size");
  const bool compact = ar.get_u64(prefix + ".compact") != 0;
  const auto scalars = ar.get_doubles(prefix + ".scalars");
  if (scalars.size() != n * 6) throw FormatError("rollout '" + prefix + "' has a malformed scalar block");
  const std::size_t obs = shape_size(observation_shape);
  std::vector<std::uint8_t> bytes;
  if (compact) {
    bytes = ar.get_bytes(prefix + ".observations");
    if (bytes.size() != n * 2 * obs) throw FormatError("rollout '" + prefix + "' has a malformed observation block");
  }
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    if (compact) {
      t.state = Tensor(observation_shape);
      t.next_state = Tensor(observation_shape);
      const std::uint8_t* src = bytes.data() + i * 2 * obs;
      for (std::size_t k = 0; k < obs; ++k) t.state[k] = src[k] / 255.0;
      for (std::size_t k = 0; k < obs; ++k) t.next_state[k] = src[obs + k] / 255.0;
    } else {
      t.state = ar.get(prefix + ".s" + std::to_string(i)).clone();
      t.next_state = ar.get(prefix + ".n" + std::to_string(i)).clone();
    }
    if (t.state.shape() != observation_shape) throw FormatError("rollout observation shape mismatch");
    const double* s = scalars.data() + i * 6;
    t.action = static_cast<int>(s[0]);
    t.reward = s[1];
    t.terminated = s[2] != 0.0;
    t.truncated = s[3] != 0.0;
    entries_.push_back({std::move(t), s[4], s[5]});
  }
}

// ---------------------------------------------------------------------------

double EpsilonSchedule::value(std::uint64_t t) const {
  const double horizon = fraction * static_cast<double>(total_timesteps);
  if (horizon <= 0.0) return final;
  const double progress = std::min(1.0, static_cast<double>(t) / horizon);
  return initial + progress * (final - initial);
}

}  // namespace pbge::agents
