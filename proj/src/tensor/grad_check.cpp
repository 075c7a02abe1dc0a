#include "pbge/tensor/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "pbge/tensor/optim.hpp"

namespace pbge {

namespace {

double evaluate(const LossBuilder& build, std::span<Tensor> params) {
  // No tape active: pure forward evaluation.
  return build(params).item();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::span<Tensor> params, double tolerance, double h,
                           std::size_t max_probes) {
  GradCheckReport report;

  const double first = evaluate(build, params);
  const double second = evaluate(build, params);
  if (std::bit_cast<std::uint64_t>(first) != std::bit_cast<std::uint64_t>(second)) {
    report.usable = false;
    return report;
  }

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = build(params);
    backward(tape, loss);
  }
  const GradList analytic = collect_grads(params);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].data();
    const std::size_t stride =
        max_probes == 0 || values.size() <= max_probes ? 1 : (values.size() + max_probes - 1) / max_probes;
    for (std::size_t j = 0; j < values.size(); j += stride) {
      const double original = values[j];
      values[j] = original + h;
      const double plus = evaluate(build, params);
      values[j] = original - h;
      const double minus = evaluate(build, params);
      values[j] = original;

      const double forward = (plus - first) / h;
      const double backward_d = (first - minus) / h;
      const double numeric = (plus - minus) / (2.0 * h);
      // One-sided slopes disagree: the element sits on a non-differentiable point.
      const double kink_scale = std::max({std::abs(forward), std::abs(backward_d), 1.0});
      if (std::abs(forward - backward_d) > 1e-3 * kink_scale) {
        ++report.excluded;
        continue;
      }
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.compared;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace pbge
