#include "pbge/agents/network.hpp"

#include <algorithm>
#include <cmath>

namespace pbge::agents {

NetArch NetArch::standard(std::size_t channels) {
  NetArch a;
  a.in_channels = channels;
  return a;
}

NetArch NetArch::smoke(std::size_t channels, std::size_t size) {
  NetArch a;
  a.in_channels = channels;
  a.in_size = size;
  a.convs = {{16, 4, 2}, {32, 3, 2}};
  a.hidden = 128;
  return a;
}

NetArch NetArch::tabular(std::size_t features, std::size_t hidden, bool bias) {
  NetArch a;
  a.bias = bias;
  a.in_channels = features;
  a.in_size = 0;
  a.convs.clear();
  a.hidden = hidden;
  return a;
}

std::vector<Shape> NetArch::trunk_shapes() const {
  std::vector<Shape> out;
  if (in_size == 0) {
    out.push_back({in_channels});
    return out;
  }
  std::size_t c = in_channels, s = in_size;
  for (const auto& conv : convs) {
    if (s < conv.kernel) throw ShapeError("conv kernel " + std::to_string(conv.kernel) + " exceeds input " + std::to_string(s));
    s = (s - conv.kernel) / conv.stride + 1;
    c = conv.filters;
    out.push_back({c, s, s});
  }
  out.push_back({c * s * s});
  return out;
}

std::size_t NetArch::feature_size() const { return trunk_shapes().back()[0]; }

Shape NetArch::input_shape() const {
  if (in_size == 0) return {in_channels};
  return {in_channels, in_size, in_size};
}

std::size_t Network::add_param(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = uniform(rng, -bound, bound);
  t.set_requires_grad();
  params_.push_back(t);
  names_.push_back(std::move(name));
  return params_.size() - 1;
}

Network::Network(const NetArch& arch, std::vector<std::size_t> head_outputs, Rng& rng) : arch_(arch) {
  std::size_t c = arch.in_channels;
  for (std::size_t i = 0; i < arch.convs.size() && arch.in_size > 0; ++i) {
    const auto& s = arch.convs[i];
    const std::size_t fan_in = c * s.kernel * s.kernel;
    const std::string n = "conv" + std::to_string(i);
    const std::size_t w = add_param(n + ".weight", {s.filters, c, s.kernel, s.kernel}, fan_in, rng);
    const std::size_t b = arch.bias ? add_param(n + ".bias", {s.filters}, fan_in, rng) : kNone;
    convs_.push_back({w, b});
    c = s.filters;
  }
  const std::size_t features = arch.feature_size();
  for (std::size_t h = 0; h < head_outputs.size(); ++h) {
    std::vector<Dense> layers;
    std::size_t width = features;
    std::vector<std::size_t> sizes;
    if (arch.hidden > 0) sizes.push_back(arch.hidden);
    sizes.push_back(head_outputs[h]);
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      const std::string n = "head" + std::to_string(h) + ".fc" + std::to_string(l);
      const std::size_t w = add_param(n + ".weight", {width, sizes[l]}, width, rng);
      const std::size_t b = arch.bias ? add_param(n + ".bias", {sizes[l]}, width, rng) : kNone;
      layers.push_back({w, b});
      width = sizes[l];
    }
    heads_.push_back(std::move(layers));
  }
}

Tensor Network::dense(const Dense& d, const Tensor& x) const {
  Tensor y = matmul(x, params_[d.weight]);
  return d.bias == kNone ? y : y + params_[d.bias];
}

Tensor Network::features(const Tensor& x) const {
  if (arch_.in_size == 0) {
    if (x.rank() != 2 || x.dim(1) != arch_.in_channels) {
      throw ShapeError("network expects [batch, " + std::to_string(arch_.in_channels) + "], got " + shape_string(x.shape()));
    }
    return x;
  }
  Tensor h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Dense& c = convs_[i];
    h = c.bias == kNone ? conv2d(h, params_[c.weight], arch_.convs[i].stride)
                        : conv2d(h, params_[c.weight], params_[c.bias], arch_.convs[i].stride);
    h = relu(h);
  }
  return flatten(h);
}

Tensor Network::head(std::size_t index, const Tensor& features) const {
  const auto& layers = heads_.at(index);
  Tensor h = features;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = dense(layers[l], h);
    if (l + 1 < layers.size()) h = relu(h);
  }
  return h;
}

std::vector<Tensor> Network::forward(const Tensor& x) const {
  const Tensor f = features(x);
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < heads_.size(); ++h) out.push_back(head(h, f));
  return out;
}

void Network::copy_from(const Network& other) {
  if (other.params_.size() != params_.size()) throw ContractViolation("copy_from: architectures differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (other.params_[i].shape() != params_[i].shape()) throw ContractViolation("copy_from: shape mismatch in " + names_[i]);
    std::ranges::copy(other.params_[i].data(), params_[i].data().begin());
  }
}

Network Network::clone() const {
  Network n = *this;
  for (auto& p : n.params_) {
    p = p.clone();
    p.set_requires_grad();
  }
  return n;
}

bool Network::equals(const Network& other) const {
  if (other.params_.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!std::ranges::equal(params_[i].data(), other.params_[i].data())) return false;
  }
  return true;
}

void Network::save(TensorArchive& ar, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) ar.put(prefix + "." + names_[i], params_[i]);
}

void Network::load(const TensorArchive& ar, const std::string& prefix) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& t = ar.get(prefix + "." + names_[i]);
    if (t.shape() != params_[i].shape()) throw FormatError("parameter " + names_[i] + " has shape " + shape_string(t.shape()));
    std::ranges::copy(t.data(), params_[i].data().begin());
  }
}

Network build_dqn_net(Rng& rng, const NetArch& arch, std::size_t actions) { return Network(arch, {actions}, rng); }

Network build_actor_critic_net(Rng& rng, const NetArch& arch, std::size_t actions) {
  return Network(arch, {actions, 1}, rng);
}

Tensor batch_of(std::span<const Tensor> observations) {
  if (observations.empty()) throw ContractViolation("batch_of: no observations");
  const Shape& s = observations.front().shape();
  Shape shape{observations.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor out(shape);
  const std::size_t n = observations.front().size();
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (observations[i].shape() != s) throw ShapeError("batch_of: mixed observation shapes");
    std::ranges::copy(observations[i].data(), out.data().begin() + static_cast<long>(i * n));
  }
  return out;
}

Tensor batch_of(const Tensor& observation) { return batch_of(std::span<const Tensor>(&observation, 1)); }

std::vector<double> softmax_probs(std::span<const double> logits) {
  const double m = *std::ranges::max_element(logits);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - m);
  for (auto& v : p) v /= z;
  return p;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cdf = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (u < cdf) return i;
  }
  // Rounding can leave the total just under one.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

std::size_t argmax_index(std::span<const double> values) {
  return static_cast<std::size_t>(std::ranges::max_element(values) - values.begin());
}

}  // namespace pbge::agents
