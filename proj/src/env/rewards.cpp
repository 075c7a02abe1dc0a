#include "pbge/env/rewards.hpp"

#include <algorithm>

#include "pbge/common.hpp"

namespace pbge::env {

BestDistances BestDistances::improved(const Distances& d) const {
  return {std::min(gt, d.gt), std::min(gtt, d.gtt), std::min(total, d.total())};
}

double reward_sparse(Event event) {
  switch (event) {
    case Event::success: return 1.0;
    case Event::failure: return -1.0;
    case Event::none: break;
  }
  return 0.0;
}

double reward_shaped1(Event event, const Distances& prev, const Distances& next) {
  if (event == Event::success) return kSuccessReward;
  if (event == Event::failure) return kFailureReward;
  const bool gripper_closer = next.gt < prev.gt;
  const bool goal_closer = next.gtt < prev.gtt;
  if (gripper_closer && goal_closer) return 2.0;
  if (gripper_closer || goal_closer) return 1.0;
  return -1.0;
}

double reward_budget(Event event, const BestDistances& best_prev, const Distances& next, double initial_total,
                     double budget) {
  if (event == Event::success) return kSuccessReward;
  if (event == Event::failure) return kFailureReward;
  if (!(initial_total > 0.0)) throw ContractViolation("reward_budget: initial total distance must be positive");
  const double total = next.total();
  if (total < best_prev.total) return (best_prev.total - total) * budget / initial_total;
  return 0.0;
}

double reward_complex(Event event, const BestDistances& best_prev, const Distances& next, int notmoving,
                      const ComplexRewardParams& p) {
  if (event == Event::success) return kSuccessReward;
  if (event == Event::failure) return kFailureReward;
  const double r = -0.33 - 0.5 * notmoving + p.w_gt * (best_prev.gt - next.gt) + p.w_gtt * (best_prev.gtt - next.gtt);
  return std::clamp(2.0 * (r - p.r_min) / (p.r_max - p.r_min), -1.0, 1.0);
}

double reward_step_penalty(Event event) { return event == Event::success ? 1.0 : -1.0; }

}  // namespace pbge::env
