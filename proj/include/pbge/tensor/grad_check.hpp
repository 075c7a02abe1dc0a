#pragma once

#include <functional>
#include <span>

#include "pbge/tensor/tensor.hpp"

namespace pbge {

struct GradCheckReport {
  bool usable = true;           // builder returned identical losses on repeated calls
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t excluded = 0;     // elements sitting on a kink (relu 0, clip edge, min/max tie)
};

using LossBuilder = std::function<Tensor(std::span<Tensor>)>;

/// Compares reverse-mode gradients of `build(params)` against central
/// differences with step `h`. Relative error uses max(|a|, |n|, 1e-3) as the
/// denominator so that near-zero gradients are judged absolutely.
/// `max_probes` > 0 limits each tensor to that many evenly spaced elements.
GradCheckReport grad_check(const LossBuilder& build, std::span<Tensor> params, double tolerance, double h = 1e-5,
                           std::size_t max_probes = 0);

}  // namespace pbge
