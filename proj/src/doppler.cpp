#include <cmath>
#include <stdexcept>
#include <vector>

#include "urbanwave/doppler.hpp"

namespace urbanwave {

double doppler_shift(double f_c_hz, double v_mps, double theta_rad, double c) {
  if (!(f_c_hz > 0.0)) throw std::invalid_argument("doppler_shift: carrier frequency must be positive");
  if (v_mps < 0.0) throw std::invalid_argument("doppler_shift: negative speed");
  return f_c_hz * (v_mps / c) * std::cos(theta_rad);
}

double path_doppler(const PropagationPath& path, const KinematicState& rx, double f_c_hz) {
  const double v = norm(rx.velocity);
  if (v == 0.0) return 0.0;
  const double theta = angle_between(rx.velocity, -path.arrival_dir);
  return doppler_shift(f_c_hz, v, theta);
}

DopplerStats doppler_stats(std::span<const double> powers_linear, std::span<const double> shifts_hz) {
  if (powers_linear.empty()) throw std::invalid_argument("doppler_stats: no paths");
  if (powers_linear.size() != shifts_hz.size()) throw std::invalid_argument("doppler_stats: size mismatch");
  double w = 0.0, m = 0.0;
  for (std::size_t i = 0; i < powers_linear.size(); ++i) {
    w += powers_linear[i];
    m += powers_linear[i] * shifts_hz[i];
  }
  if (!(w > 0.0)) throw std::invalid_argument("doppler_stats: total power is zero");
  m /= w;
  double var = 0.0;
  for (std::size_t i = 0; i < powers_linear.size(); ++i) {
    const double d = shifts_hz[i] - m;
    var += powers_linear[i] * d * d;
  }
  return {m, std::sqrt(var / w)};
}

DopplerStats doppler_stats(std::span<const PropagationPath> paths) {
  std::vector<double> p, f;
  p.reserve(paths.size());
  f.reserve(paths.size());
  for (const auto& path : paths) {
    p.push_back(std::pow(10.0, path.power_dbm / 10.0));
    f.push_back(path.doppler_hz);
  }
  return doppler_stats(p, f);
}

void apply_doppler(ChannelSnapshot& snapshot, const KinematicState& rx, double f_c_hz) {
  for (auto& p : snapshot.paths) p.doppler_hz = path_doppler(p, rx, f_c_hz);
}

}  // namespace urbanwave
