#include "pbge/tensor/optim.hpp"

#include <cmath>
#include <string>

namespace pbge {

namespace {

void check_grads(std::span<Tensor> params, const GradList& grads, const char* who) {
  if (grads.size() != params.size()) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size()) {
      throw ContractViolation(std::string(who) + ": gradient " + std::to_string(i) + " has " +
                              std::to_string(grads[i].size()) + " entries, parameter has " +
                              std::to_string(params[i].size()));
    }
  }
}

// Allocates accumulators on first use and rejects a different layout afterwards.
void bind_layout(std::vector<std::vector<double>>& acc, std::span<Tensor> params, const char* who) {
  if (acc.empty()) {
    acc.reserve(params.size());
    for (const auto& p : params) acc.emplace_back(p.size(), 0.0);
    return;
  }
  bool ok = acc.size() == params.size();
  for (std::size_t i = 0; ok && i < params.size(); ++i) ok = acc[i].size() == params[i].size();
  if (!ok) throw ContractViolation(std::string(who) + ": accumulator layout does not match parameters");
}

void require_kind(const OptimizerState& state, OptimizerKind kind, const char* who) {
  if (state.kind != kind) throw ContractViolation(std::string(who) + ": optimizer state has the wrong kind");
}

}  // namespace

OptimizerState OptimizerState::sgd(double learning_rate) {
  OptimizerState s;
  s.kind = OptimizerKind::sgd;
  s.learning_rate = learning_rate;
  return s;
}

OptimizerState OptimizerState::rmsprop(double learning_rate, double rho, double eps) {
  OptimizerState s;
  s.kind = OptimizerKind::rmsprop;
  s.learning_rate = learning_rate;
  s.rho = rho;
  s.eps = eps;
  return s;
}

OptimizerState OptimizerState::adam(double learning_rate, double beta1, double beta2, double eps) {
  OptimizerState s;
  s.kind = OptimizerKind::adam;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void sgd_step(std::span<Tensor> params, const GradList& grads, OptimizerState& state) {
  require_kind(state, OptimizerKind::sgd, "sgd_step");
  check_grads(params, grads, "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= state.learning_rate * grads[i][j];
  }
  ++state.step_count;
}

void rmsprop_step(std::span<Tensor> params, const GradList& grads, OptimizerState& state) {
  require_kind(state, OptimizerKind::rmsprop, "rmsprop_step");
  check_grads(params, grads, "rmsprop_step");
  bind_layout(state.second_moment, params, "rmsprop_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      v[j] = state.rho * v[j] + (1.0 - state.rho) * g * g;
      p[j] -= state.learning_rate * g / (std::sqrt(v[j]) + state.eps);
    }
  }
  ++state.step_count;
}

void adam_step(std::span<Tensor> params, const GradList& grads, OptimizerState& state) {
  require_kind(state, OptimizerKind::adam, "adam_step");
  check_grads(params, grads, "adam_step");
  bind_layout(state.first_moment, params, "adam_step");
  bind_layout(state.second_moment, params, "adam_step");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

GradList collect_grads(std::span<const Tensor> params) {
  GradList grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.size(), 0.0);
    }
  }
  return grads;
}

void apply_gradients(std::span<Tensor> params, OptimizerState& state) {
  const GradList grads = collect_grads(params);
  switch (state.kind) {
    case OptimizerKind::sgd: sgd_step(params, grads, state); break;
    case OptimizerKind::rmsprop: rmsprop_step(params, grads, state); break;
    case OptimizerKind::adam: adam_step(params, grads, state); break;
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / (norm + 1e-6);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.ensure_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace pbge
