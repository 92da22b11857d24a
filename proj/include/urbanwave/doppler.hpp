#pragma once

#include <span>

#include "urbanwave/propagation.hpp"
#include "urbanwave/trajectory.hpp"

namespace urbanwave {

/// Speed of light used for Doppler shifts (the rounded value, so 30 GHz at 10 m/s is 1000 Hz).
inline constexpr double kDopplerSpeedOfLight = 3e8;

/// f_c * (v / c) * cos(theta). Throws std::invalid_argument for f_c <= 0 or v < 0.
double doppler_shift(double f_c_hz, double v_mps, double theta_rad, double c = kDopplerSpeedOfLight);

/// Shift seen by a moving receiver: theta is the angle between its velocity and the direction
/// from the receiver back along the arriving ray. Zero velocity gives 0 Hz.
double path_doppler(const PropagationPath& path, const KinematicState& rx, double f_c_hz);

struct DopplerStats {
  double mean_shift_hz = 0.0;
  double rms_spread_hz = 0.0;
};

/// Power-weighted mean and RMS spread. Throws std::invalid_argument on empty or mismatched input.
DopplerStats doppler_stats(std::span<const double> powers_linear, std::span<const double> shifts_hz);
/// Same, using each path's power_dbm and doppler_hz.
DopplerStats doppler_stats(std::span<const PropagationPath> paths);

/// Fills doppler_hz of every path in the snapshot.
void apply_doppler(ChannelSnapshot& snapshot, const KinematicState& rx, double f_c_hz);

}  // namespace urbanwave
