#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pbge/common.hpp"
#include "pbge/tensor/serialize.hpp"
#include "pbge/tensor/tensor.hpp"

namespace pbge::agents {

struct Transition {
  Tensor state;
  int action = 0;
  double reward = 0.0;
  Tensor next_state;
  bool terminated = false;
  bool truncated = false;

  bool done() const { return terminated || truncated; }
  void validate(std::size_t actions = 4) const;
};

struct Batch {
  Tensor states;       // [B, ...]
  Tensor next_states;  // [B, ...]
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<bool> terminated;
  std::vector<bool> truncated;
  std::size_t size() const { return actions.size(); }
};

/// Fixed-capacity ring of transitions with observations stored as bytes:
/// values must be multiples of 1/255 in [0, 1], as the pipeline produces.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, Shape observation_shape, std::uint64_t seed);

  void add(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  /// i-th stored transition, oldest first.
  Transition at(std::size_t i) const;
  /// Uniform with replacement.
  Batch sample(std::size_t batch_size);
  std::vector<std::size_t> sample_indices(std::size_t batch_size);
  Batch gather(std::span<const std::size_t> indices) const;

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  std::size_t slot(std::size_t i) const { return (head_ + capacity_ - size_ + i) % capacity_; }
  void encode(const Tensor& obs, std::uint8_t* dst) const;
  void decode(const std::uint8_t* src, double* dst) const;

  std::size_t capacity_;
  Shape shape_;
  std::size_t obs_bytes_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
  std::vector<std::uint8_t> states_, next_states_;
  std::vector<std::int32_t> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> flags_;
  Rng rng_;
};

struct RolloutEntry {
  Transition transition;
  double log_prob = 0.0;
  double value = 0.0;
};

using ValueFn = std::function<double(const Tensor& observation)>;

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma v(s_{t+1}) (1 - terminated) - v(s_t),
/// A_t = sum_k (gamma lambda)^k delta_{t+k} within an episode.
/// Truncated or open segment tails bootstrap from value_fn(next_state).
GaeResult compute_gae(std::span<const RolloutEntry> rollout, double gamma, double lambda, const ValueFn& value_fn);

class RolloutBuffer {
 public:
  void add(Transition t, double log_prob, double value);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool closed() const { return closed_; }
  const std::vector<RolloutEntry>& entries() const { return entries_; }

  /// Ends the segment and fills advantages and returns.
  void close(double gamma, double lambda, const ValueFn& value_fn);
  const std::vector<double>& advantages() const;
  const std::vector<double>& returns() const;
  void clear();

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix, const Shape& observation_shape);

 private:
  std::vector<RolloutEntry> entries_;
  GaeResult gae_;
  bool closed_ = false;
};

struct EpsilonSchedule {
  double initial = 1.0;
  double final = 0.05;
  double fraction = 0.1;
  std::uint64_t total_timesteps = 1;

  double value(std::uint64_t t) const;
};

}  // namespace pbge::agents
