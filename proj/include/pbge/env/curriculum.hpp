#pragma once

namespace pbge::env {

struct CurriculumState {
  double spawn_radius_fraction = 0.1;
  int clutter_count_current = 0;
  int successes = 0;

  friend bool operator==(const CurriculumState&, const CurriculumState&) = default;
};

inline constexpr double kCurriculumStep = 0.02;
inline constexpr int kSuccessesPerClutter = 25;

/// Widens the spawn radius after each success and adds one clutter item
/// every 25 successes, up to `max_clutter`. Failures leave the state alone.
CurriculumState curriculum_update(const CurriculumState& state, bool episode_success, int max_clutter);

}  // namespace pbge::env
