#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "urbanwave/coherence.hpp"
#include "urbanwave/config.hpp"
#include "urbanwave/io.hpp"

namespace urbanwave {

/// Runs fn(0..n-1) on up to `workers` threads; the first exception is rethrown after all finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

/// Appends one metal car box per trajectory (ids from first_id) and returns the combined scene with
/// the trajectories attached. The box's local base sits at minus the trajectory's first height so
/// that receiver-height tracks still put the car on the ground.
Scene with_vehicles(const std::vector<Material>& materials, std::vector<SceneObject> objects,
                    const std::vector<Trajectory>& vehicles, std::uint32_t first_id);

struct RunSummary {
  std::size_t steps = 0;
  std::size_t receivers = 0;
  std::size_t rows = 0;
  std::size_t segments = 0;
  unsigned workers = 1;
  double wall_time_s = 0.0;
  std::uint64_t rays_cast = 0;
  CacheStats cache;
  std::vector<std::pair<std::string, double>> lag1_correlation;  // per receiver, NaN when undefined
};

struct SimulationResult {
  std::vector<PowerTraceRow> rows;  // by time, then by receiver input order
  RunSummary summary;
};

/// Advances the scene on the uniform grid t0 + k * timestep (t0 = earliest receiver sample, up to
/// the latest sample, at most max_steps steps) and traces every receiver active at each step.
SimulationResult run_simulation(Scene& scene, const std::vector<Trajectory>& receivers, const SimulationConfig& config,
                                std::size_t max_steps = std::numeric_limits<std::size_t>::max());

void write_summary(const RunSummary& summary, const SimulationConfig& config, const std::string& path);

/// Static receivers at rx_height on cell centers of [x0, x1] x [y0, y1] at scene time t_s.
HeatmapGrid compute_heatmap(Scene& scene, const SimulationConfig& config, double t_s, double x0, double y0, double x1,
                            double y1, double cell_m);

/// Outdoor random walk in the square [x0, x0 + w] x [y0, y0 + w]: axis-aligned legs that turn
/// whenever the next sample would enter a closed object or leave the square.
Trajectory random_walk(const Scene& scene, std::mt19937_64& rng, double x0, double y0, double w, std::size_t steps,
                       double dt_s, double speed_mps, double height_m);

struct BenchReportRow {
  std::string scenario;
  double area_width_m = 0.0;
  std::size_t n_objects = 0;
  double wall_time_s = 0.0;
  std::uint64_t rays_cast = 0;
  double cache_hit_rate = 0.0;
};

inline constexpr const char* kBenchHeader = "scenario,area_width_m,n_objects,wall_time_s,rays_cast,cache_hit_rate";
void write_bench_report(const std::vector<BenchReportRow>& rows, const std::string& csv_path);

/// Area mode: bench_receivers moving receivers in square sub-regions of every bench width,
/// averaged over bench_placements random placements inside the static scene.
std::vector<BenchReportRow> bench_area(const Scene& city, const SimulationConfig& config);

/// Objects mode: a bench_region_m square with every count of moving receivers.
std::vector<BenchReportRow> bench_objects(const Scene& city, const SimulationConfig& config);

/// One receiver route evaluated as (a) one dynamic run with segments and the path cache and
/// (b) static_runs independent evaluations that rebuild the scene and trace from scratch.
struct StaticDynamicResult {
  BenchReportRow dynamic_row;
  BenchReportRow static_row;
  SimulationResult dynamic_run;
  std::vector<ChannelSnapshot> static_snapshots;
};

StaticDynamicResult bench_static_dynamic(const std::vector<Material>& materials,
                                         const std::vector<SceneObject>& static_objects,
                                         const std::vector<Trajectory>& vehicles, const Trajectory& route,
                                         const SimulationConfig& config);

/// Builds the vehicles and the route from the configuration's seed and runs bench_static_dynamic.
StaticDynamicResult bench_static_dynamic(const Scene& city, const SimulationConfig& config);

}  // namespace urbanwave
