#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pbge/tensor/tensor.hpp"

namespace pbge {

enum class OptimizerKind { sgd, rmsprop, adam };

/// Hyperparameters plus per-parameter accumulators laid out like the
/// parameter list they were first applied to.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double rho = 0.99;  // rmsprop decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState sgd(double learning_rate);
  static OptimizerState rmsprop(double learning_rate, double rho = 0.99, double eps = 1e-5);
  static OptimizerState adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
};

using GradList = std::vector<std::vector<double>>;

void sgd_step(std::span<Tensor> params, const GradList& grads, OptimizerState& state);
void rmsprop_step(std::span<Tensor> params, const GradList& grads, OptimizerState& state);
void adam_step(std::span<Tensor> params, const GradList& grads, OptimizerState& state);

/// Gradients from each parameter's slot; a parameter without one contributes zeros.
GradList collect_grads(std::span<const Tensor> params);

/// Dispatches on `state.kind` using the parameters' own gradient slots.
void apply_gradients(std::span<Tensor> params, OptimizerState& state);

void zero_grads(std::span<Tensor> params);

/// Rescales all gradient slots so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace pbge
