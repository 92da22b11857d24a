#pragma once

#include <string>
#include <vector>

#include "urbanwave/vec3.hpp"

namespace urbanwave {

struct TrajectorySample {
  double t_s = 0.0;
  Vec3 position;
  double speed_mps = 0.0;
  Vec3 heading{1.0, 0.0, 0.0};
};

/// Time-ordered samples of one receiver (or moving obstacle).
struct Trajectory {
  std::string receiver_id;
  std::vector<TrajectorySample> samples;

  double t_first() const { return samples.front().t_s; }
  double t_last() const { return samples.back().t_s; }
};

struct KinematicState {
  Vec3 position;
  Vec3 velocity;
  double time_s = 0.0;
};

/// Throws InputError when times are not strictly increasing or a speed is negative.
void validate(const Trajectory& traj);

/// Piecewise-linear position; velocity is the finite difference of the
/// bracketing samples. Throws std::out_of_range outside [t_first, t_last].
KinematicState sample(const Trajectory& traj, double t);

/// Same as sample() but clamps t into the trajectory's time span.
KinematicState sample_clamped(const Trajectory& traj, double t);

/// Cumulative arc length from the first sample to time t.
double arc_length_at(const Trajectory& traj, double t);

/// Time at which the cumulative arc length reaches `length` (t_last if never).
double time_at_arc_length(const Trajectory& traj, double length);

/// Bounding box of the trajectory between t0 and t1.
Aabb bounds_between(const Trajectory& traj, double t0, double t1);

}  // namespace urbanwave
