#include "pbge/env/curriculum.hpp"

#include <algorithm>

namespace pbge::env {

CurriculumState curriculum_update(const CurriculumState& state, bool episode_success, int max_clutter) {
  if (!episode_success) return state;
  CurriculumState next = state;
  next.spawn_radius_fraction = std::min(1.0, state.spawn_radius_fraction + kCurriculumStep);
  next.successes = state.successes + 1;
  if (next.successes % kSuccessesPerClutter == 0) {
    next.clutter_count_current = std::min(max_clutter, state.clutter_count_current + 1);
  }
  return next;
}

}  // namespace pbge::env
