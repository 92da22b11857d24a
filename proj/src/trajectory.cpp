#include <algorithm>
#include <stdexcept>
#include <string>

#include "urbanwave/errors.hpp"
#include "urbanwave/trajectory.hpp"

namespace urbanwave {

void validate(const Trajectory& traj) {
  if (traj.samples.empty()) throw InputError("trajectory '" + traj.receiver_id + "' has no samples");
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    if (traj.samples[i].speed_mps < 0.0) {
      throw InputError("trajectory '" + traj.receiver_id + "': negative speed at sample " + std::to_string(i));
    }
    if (i > 0 && !(traj.samples[i].t_s > traj.samples[i - 1].t_s)) {
      throw InputError("trajectory '" + traj.receiver_id + "': times not strictly increasing at sample " +
                       std::to_string(i));
    }
  }
}

namespace {

/// Index i such that samples[i].t <= t < samples[i+1].t (last interval at t_last).
std::size_t interval_of(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  const auto it = std::upper_bound(s.begin(), s.end(), t,
                                   [](double v, const TrajectorySample& x) { return v < x.t_s; });
  const auto i = static_cast<std::size_t>(std::distance(s.begin(), it));
  if (i == 0) return 0;
  return std::min(i - 1, s.size() - 2);
}

}  // namespace

KinematicState sample(const Trajectory& traj, double t) {
  if (traj.samples.empty() || t < traj.t_first() || t > traj.t_last()) {
    throw std::out_of_range("sample: t=" + std::to_string(t) + " outside trajectory '" + traj.receiver_id + "'");
  }
  if (traj.samples.size() == 1) return {traj.samples[0].position, Vec3{}, t};
  const std::size_t i = interval_of(traj, t);
  const auto& a = traj.samples[i];
  const auto& b = traj.samples[i + 1];
  const double dt = b.t_s - a.t_s;
  const Vec3 velocity = (b.position - a.position) / dt;
  if (t == a.t_s) return {a.position, velocity, t};
  if (t == b.t_s) return {b.position, velocity, t};
  const double u = (t - a.t_s) / dt;
  return {a.position + (b.position - a.position) * u, velocity, t};
}

KinematicState sample_clamped(const Trajectory& traj, double t) {
  KinematicState ks = sample(traj, std::clamp(t, traj.t_first(), traj.t_last()));
  if (t < traj.t_first() || t > traj.t_last()) ks.velocity = Vec3{};
  ks.time_s = t;
  return ks;
}

double arc_length_at(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (t <= s[i].t_s) break;
    const double seg = distance(s[i].position, s[i + 1].position);
    if (t >= s[i + 1].t_s) {
      acc += seg;
    } else {
      acc += seg * (t - s[i].t_s) / (s[i + 1].t_s - s[i].t_s);
      break;
    }
  }
  return acc;
}

double time_at_arc_length(const Trajectory& traj, double length) {
  const auto& s = traj.samples;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double seg = distance(s[i].position, s[i + 1].position);
    if (acc + seg >= length && seg > 0.0) {
      const double u = std::clamp((length - acc) / seg, 0.0, 1.0);
      return s[i].t_s + u * (s[i + 1].t_s - s[i].t_s);
    }
    acc += seg;
  }
  return traj.t_last();
}

Aabb bounds_between(const Trajectory& traj, double t0, double t1) {
  Aabb box;
  box.expand(sample_clamped(traj, t0).position);
  box.expand(sample_clamped(traj, t1).position);
  for (const auto& s : traj.samples) {
    if (s.t_s > t0 && s.t_s < t1) box.expand(s.position);
  }
  return box;
}

}  // namespace urbanwave
