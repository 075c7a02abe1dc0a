#pragma once

#include "pbge/env/world.hpp"

namespace pbge::env {

enum class Event { none, success, failure };

inline constexpr double kSuccessReward = 100.0;
inline constexpr double kFailureReward = -100.0;

/// Smallest distances reached so far in the episode.
struct BestDistances {
  double gt = 0.0;
  double gtt = 0.0;
  double total = 0.0;

  static BestDistances from(const Distances& d) { return {d.gt, d.gtt, d.total()}; }
  BestDistances improved(const Distances& d) const;
};

struct ComplexRewardParams {
  double w_gt = 0.15;
  double w_gtt = 0.15;
  double r_min = -2.0;
  double r_max = 2.0;
};

double reward_sparse(Event event);

double reward_shaped1(Event event, const Distances& prev, const Distances& next);

/// Pays the share of `budget` by which the total distance beats its best so far.
double reward_budget(Event event, const BestDistances& best_prev, const Distances& next, double initial_total,
                     double budget = 100.0);

double reward_complex(Event event, const BestDistances& best_prev, const Distances& next, int notmoving,
                      const ComplexRewardParams& params = {});

double reward_step_penalty(Event event);

}  // namespace pbge::env
