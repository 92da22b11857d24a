#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "urbanwave/coherence.hpp"
#include "urbanwave/propagation.hpp"

namespace urbanwave {

struct SimulationConfig {
  double frequency_hz = 3e9;
  double tx_power_dbm = 50.0;
  Vec3 tx_position{0.0, 0.0, 30.0};
  int max_reflection_order = 2;
  bool diffraction_enabled = true;
  double timestep_s = 0.1;
  double max_segment_length_m = 10.0;
  double r_threshold = 0.9;
  double theta_floor_rad = 0.05;
  double fallback_coherence_s = 0.5;
  Combining combining = Combining::NonCoherent;
  CorrelationVariant correlation_variant = CorrelationVariant::Standard;
  CoefficientMode reflection_coefficient_mode = CoefficientMode::Amplitude;
  bool cache_enabled = true;
  double rx_height_m = 1.5;
  unsigned worker_count = 1;
  std::uint64_t seed = 42;
  std::string obstacles;  // optional trajectory file of moving vehicles, resolved against the config's directory

  // bench
  std::vector<double> bench_widths{100, 200, 400, 800};
  std::vector<std::size_t> bench_object_counts{10, 100, 1000, 10000};
  std::size_t bench_receivers = 100;
  double bench_region_m = 400.0;
  int bench_placements = 10;
  int bench_steps = 10;
  double bench_speed_mps = 10.0;
  double bench_route_length_m = 400.0;
  int static_runs = 40;
  std::size_t bench_obstacles = 0;  // extra moving cars in staticdynamic mode

  Transmitter transmitter() const { return {tx_position, tx_power_dbm, frequency_hz}; }
  TraceConfig trace_config() const;
  TracerConfig tracer_config() const;
};

/// Flat key=value lines; '#' starts a comment. Lists and vectors are comma separated. Unknown
/// keys, malformed values and out-of-range settings throw InputError naming the line.
SimulationConfig parse_config(const std::string& text, const std::string& base_dir = "");

/// Reads the file, then applies the URBANWAVE_WORKERS environment override.
SimulationConfig load_config(const std::string& path);

}  // namespace urbanwave
