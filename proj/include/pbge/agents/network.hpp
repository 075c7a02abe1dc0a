#pragma once

#include <string>
#include <vector>

#include "pbge/common.hpp"
#include "pbge/tensor/serialize.hpp"
#include "pbge/tensor/tensor.hpp"

namespace pbge::agents {

struct ConvSpec {
  std::size_t filters;
  std::size_t kernel;
  std::size_t stride;
};

/// Convolutional trunk plus the width of each head's hidden layer.
/// `in_size == 0` means a flat feature vector of `in_channels` entries.
struct NetArch {
  std::size_t in_channels = 4;
  std::size_t in_size = 84;
  std::vector<ConvSpec> convs{{32, 8, 4}, {64, 4, 2}, {64, 3, 1}};
  std::size_t hidden = 512;  // 0: heads are a single linear map
  bool bias = true;

  static NetArch standard(std::size_t channels = 4);
  /// Reduced profile for desk-scale runs on small observations.
  static NetArch smoke(std::size_t channels, std::size_t size);
  /// Flat features, no bias: with one-hot inputs each weight is a table entry.
  static NetArch tabular(std::size_t features, std::size_t hidden = 0, bool bias = false);

  /// Output extents after each conv layer, then the flattened width.
  std::vector<Shape> trunk_shapes() const;
  std::size_t feature_size() const;
  Shape input_shape() const;
};

class Network {
 public:
  Network() = default;
  Network(const NetArch& arch, std::vector<std::size_t> head_outputs, Rng& rng);

  /// Shared trunk output, [batch, feature_size].
  Tensor features(const Tensor& x) const;
  Tensor head(std::size_t index, const Tensor& features) const;
  std::vector<Tensor> forward(const Tensor& x) const;

  const NetArch& arch() const { return arch_; }
  std::size_t num_heads() const { return heads_.size(); }
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }

  /// Overwrites parameter values in place.
  void copy_from(const Network& other);
  Network clone() const;
  bool equals(const Network& other) const;

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  struct Dense {
    std::size_t weight, bias;
  };
  std::size_t add_param(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor dense(const Dense& d, const Tensor& x) const;

  NetArch arch_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::vector<Dense> convs_;
  std::vector<std::vector<Dense>> heads_;
};

/// Conv trunk, 512 hidden units, one Q-value per action.
Network build_dqn_net(Rng& rng, const NetArch& arch = NetArch::standard(), std::size_t actions = 4);
/// Shared trunk with separate actor (logits) and critic (value) branches.
Network build_actor_critic_net(Rng& rng, const NetArch& arch = NetArch::standard(), std::size_t actions = 4);

/// Stacks single observations [C,H,W] (or [F]) into a batch.
Tensor batch_of(std::span<const Tensor> observations);
Tensor batch_of(const Tensor& observation);

std::vector<double> softmax_probs(std::span<const double> logits);
/// Inverse-CDF draw from a categorical distribution.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);
std::size_t argmax_index(std::span<const double> values);

}  // namespace pbge::agents
