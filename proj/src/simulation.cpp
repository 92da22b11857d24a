#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "urbanwave/citygen.hpp"
#include "urbanwave/doppler.hpp"
#include "urbanwave/dynamics.hpp"
#include "urbanwave/errors.hpp"
#include "urbanwave/simulation.hpp"

namespace urbanwave {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<SceneObject> static_objects_of(const Scene& scene) {
  std::vector<SceneObject> out;
  for (const auto& o : scene.objects()) {
    if (!o.is_dynamic) out.push_back(o);
  }
  return out;
}

std::uint32_t next_free_id(const std::vector<SceneObject>& objects) {
  std::uint32_t id = 0;
  for (const auto& o : objects) id = std::max(id, o.id);
  return id + 1;
}

PowerTraceRow make_row(CoherentTracer& tracer, const Scene& scene, const Trajectory& traj,
                       const std::vector<TrajectorySegment>& segs, double t, double f_c) {
  const KinematicState k = sample_clamped(traj, t);
  const std::size_t si = segment_at(segs, std::clamp(t, traj.t_first(), traj.t_last()));
  const Aabb box = bounds_between(traj, segs[si].t_start, segs[si].t_end);
  ChannelSnapshot snap = tracer.trace(scene, traj.receiver_id, k, si, box);
  apply_doppler(snap, k, f_c);

  PowerTraceRow row;
  row.t_s = t;
  row.rx_id = traj.receiver_id;
  row.position = k.position;
  row.power_dbm = snap.total_power_dbm;
  row.n_paths = static_cast<std::uint32_t>(snap.paths.size());
  row.los = snap.los;
  row.segment = static_cast<std::uint32_t>(si);
  row.cache_hits = tracer.last_hits(traj.receiver_id);
  if (snap.paths.empty()) {
    row.delay_spread_s = row.doppler_mean_hz = row.doppler_spread_hz = kNaN;
  } else {
    row.delay_spread_s = rms_delay_spread_s(snap.paths);
    const DopplerStats ds = doppler_stats(snap.paths);
    row.doppler_mean_hz = ds.mean_shift_hz;
    row.doppler_spread_hz = ds.rms_spread_hz;
  }
  return row;
}

}  // namespace

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Scene with_vehicles(const std::vector<Material>& materials, std::vector<SceneObject> objects,
                    const std::vector<Trajectory>& vehicles, std::uint32_t first_id) {
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const auto& traj = vehicles[i];
    validate(traj);
    SceneObject o;
    o.id = first_id + static_cast<std::uint32_t>(i);
    o.name = traj.receiver_id.empty() ? "vehicle" + std::to_string(o.id) : traj.receiver_id;
    o.is_dynamic = true;
    const double lift = traj.samples.front().position.z;
    o.triangles = make_box({0.0, 0.0, -lift}, kDefaultVehicleSize, 1, o.id);
    o.pose = traj.samples.front().position;
    ids.push_back(o.id);
    objects.push_back(std::move(o));
  }
  Scene scene(materials, std::move(objects));
  for (std::size_t i = 0; i < vehicles.size(); ++i) scene.set_trajectory(ids[i], vehicles[i]);
  if (!vehicles.empty()) {
    double t0 = vehicles.front().t_first();
    for (const auto& v : vehicles) t0 = std::min(t0, v.t_first());
    scene.advance(t0);
  }
  return scene;
}

SimulationResult run_simulation(Scene& scene, const std::vector<Trajectory>& receivers, const SimulationConfig& config,
                                std::size_t max_steps) {
  const auto start = Clock::now();
  const std::uint64_t rays_before = scene.rays_cast();
  if (receivers.empty()) throw InputError("no receiver trajectories");
  std::set<std::string> ids;
  for (const auto& r : receivers) {
    validate(r);
    if (r.samples.size() < 2) throw InputError("trajectory '" + r.receiver_id + "' needs at least two samples");
    if (!ids.insert(r.receiver_id).second) throw InputError("duplicate receiver id '" + r.receiver_id + "'");
  }

  const Transmitter tx = config.transmitter();
  const unsigned workers = config.worker_count;
  double t0 = receivers.front().t_first(), t1 = receivers.front().t_last();
  for (const auto& r : receivers) {
    t0 = std::min(t0, r.t_first());
    t1 = std::max(t1, r.t_last());
  }
  const double dt = config.timestep_s;
  const std::size_t steps =
      std::min(max_steps, static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9)) + 1);

  SegmentationParams sp;
  sp.max_segment_length_m = config.max_segment_length_m;
  sp.scan_step_s = dt;
  sp.coefficient_mode = config.reflection_coefficient_mode;
  const ImageTree first_order = ImageTree::build_static(scene, tx.position, 1);
  std::vector<std::vector<TrajectorySegment>> segments(receivers.size());
  parallel_for(receivers.size(), workers,
               [&](std::size_t i) { segments[i] = segment_trajectory(scene, tx, receivers[i], sp, &first_order); });

  CoherentTracer tracer(scene, tx, config.tracer_config());
  SimulationResult result;
  std::vector<std::size_t> active;
  std::vector<PowerTraceRow> step_rows;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    scene.advance(t);
    tracer.begin_step(scene);
    active.clear();
    for (std::size_t i = 0; i < receivers.size(); ++i) {
      if (t >= receivers[i].t_first() - 1e-9 && t <= receivers[i].t_last() + 1e-9) active.push_back(i);
    }
    step_rows.assign(active.size(), {});
    parallel_for(active.size(), workers, [&](std::size_t j) {
      const std::size_t i = active[j];
      step_rows[j] = make_row(tracer, scene, receivers[i], segments[i], t, tx.frequency_hz);
    });
    result.rows.insert(result.rows.end(), std::make_move_iterator(step_rows.begin()),
                       std::make_move_iterator(step_rows.end()));
  }

  RunSummary& s = result.summary;
  s.steps = steps;
  s.receivers = receivers.size();
  s.rows = result.rows.size();
  for (const auto& seg : segments) s.segments += seg.size();
  s.workers = workers;
  s.cache = tracer.stats();
  for (const auto& r : receivers) {
    GainSeries g;
    for (const auto& row : result.rows) {
      if (row.rx_id != r.receiver_id) continue;
      g.t.push_back(row.t_s);
      const double p = row.power_dbm.value_or(-std::numeric_limits<double>::infinity());
      g.g.push_back(std::isfinite(p) ? std::pow(10.0, (p - tx.power_dbm) / 20.0) : 0.0);
    }
    double r1 = kNaN;
    try {
      r1 = correlation(g, 1, config.correlation_variant);
    } catch (const std::invalid_argument&) {
    }
    s.lag1_correlation.emplace_back(r.receiver_id, r1);
  }
  s.rays_cast = scene.rays_cast() - rays_before;
  s.wall_time_s = seconds_since(start);
  return result;
}

void write_summary(const RunSummary& s, const SimulationConfig& config, const std::string& path) {
  nlohmann::json j;
  j["steps"] = s.steps;
  j["receivers"] = s.receivers;
  j["rows"] = s.rows;
  j["segments"] = s.segments;
  j["workers"] = s.workers;
  j["wall_time_s"] = s.wall_time_s;
  j["rays_cast"] = s.rays_cast;
  j["cache"] = {{"enabled", config.cache_enabled},
                {"hits", s.cache.hits},
                {"misses", s.cache.misses},
                {"evictions", s.cache.evictions},
                {"discoveries", s.cache.discoveries}};
  j["correlation_variant"] = config.correlation_variant == CorrelationVariant::Standard ? "Standard" : "AsPrinted";
  nlohmann::json corr = nlohmann::json::object();
  for (const auto& [id, r] : s.lag1_correlation) corr[id] = std::isfinite(r) ? nlohmann::json(r) : nlohmann::json();
  j["lag1_correlation"] = corr;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

HeatmapGrid compute_heatmap(Scene& scene, const SimulationConfig& config, double t_s, double x0, double y0, double x1,
                            double y1, double cell_m) {
  if (!(cell_m > 0.0)) throw InputError("cell size must be positive");
  if (!(x1 > x0) || !(y1 > y0)) throw InputError("zero-area region");
  HeatmapGrid grid;
  grid.cell_m = cell_m;
  grid.nx = static_cast<std::uint32_t>(std::max(1.0, std::ceil((x1 - x0) / cell_m - 1e-9)));
  grid.ny = static_cast<std::uint32_t>(std::max(1.0, std::ceil((y1 - y0) / cell_m - 1e-9)));
  grid.origin = {x0 + 0.5 * cell_m, y0 + 0.5 * cell_m, 0.0};
  grid.rx_height_m = config.rx_height_m;
  grid.values.assign(std::size_t{grid.nx} * grid.ny, -std::numeric_limits<double>::infinity());

  scene.advance(t_s);
  TracerConfig tc = config.tracer_config();
  tc.cache_enabled = false;
  CoherentTracer tracer(scene, config.transmitter(), tc);
  tracer.begin_step(scene);
  parallel_for(grid.ny, config.worker_count, [&](std::size_t iy) {
    for (std::uint32_t ix = 0; ix < grid.nx; ++ix) {
      const Vec3 p{grid.origin.x + ix * cell_m, grid.origin.y + static_cast<double>(iy) * cell_m, grid.rx_height_m};
      const auto snap = tracer.trace(scene, "grid", {p, {}, t_s}, 0, Aabb{});
      if (snap.total_power_dbm) grid.at(ix, static_cast<std::uint32_t>(iy)) = *snap.total_power_dbm;
    }
  });
  return grid;
}

Trajectory random_walk(const Scene& scene, std::mt19937_64& rng, double x0, double y0, double w, std::size_t steps,
                       double dt_s, double speed_mps, double height_m) {
  std::vector<Aabb> blocks;
  for (std::size_t i = 0; i < scene.objects().size(); ++i) {
    if (!scene.objects()[i].is_dynamic && scene.object_info()[i].closed) blocks.push_back(scene.object_info()[i].bounds.padded(1.0));
  }
  auto blocked = [&](const Vec3& p) {
    if (p.x < x0 || p.x > x0 + w || p.y < y0 || p.y > y0 + w) return true;
    for (const auto& b : blocks) {
      if (p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y && p.z <= b.max.z) return true;
    }
    return false;
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 pos;
  bool found = false;
  for (int tries = 0; tries < 10000 && !found; ++tries) {
    pos = {x0 + w * u(rng), y0 + w * u(rng), height_m};
    found = !blocked(pos);
  }
  if (!found) throw InputError("no outdoor space in the bench region");

  const Vec3 dirs[4] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  int dir = static_cast<int>(u(rng) * 4.0) % 4;
  Trajectory t;
  t.samples.push_back({0.0, pos, speed_mps, dirs[dir]});
  for (std::size_t k = 1; k <= steps; ++k) {
    int order[4] = {0, 1, 2, 3};
    std::shuffle(order, order + 4, rng);
    int pick = -1;
    if (!blocked(pos + dirs[dir] * (speed_mps * dt_s))) pick = dir;
    for (int c = 0; c < 4 && pick < 0; ++c) {
      if (!blocked(pos + dirs[order[c]] * (speed_mps * dt_s))) pick = order[c];
    }
    double v = 0.0;
    if (pick >= 0) {
      dir = pick;
      pos = pos + dirs[dir] * (speed_mps * dt_s);
      v = speed_mps;
    }
    t.samples.push_back({static_cast<double>(k) * dt_s, pos, v, dirs[dir]});
  }
  return t;
}

void write_bench_report(const std::vector<BenchReportRow>& rows, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write '" + csv_path + "'");
  out << kBenchHeader << '\n';
  for (const auto& r : rows) {
    out << r.scenario << ',' << format_number(r.area_width_m) << ',' << r.n_objects << ','
        << format_number(r.wall_time_s) << ',' << r.rays_cast << ',' << format_number(r.cache_hit_rate) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + csv_path + "'");
}

namespace {

struct Accumulator {
  double wall = 0.0;
  std::uint64_t rays = 0, hits = 0, lookups = 0;
  int runs = 0;

  void add(const RunSummary& s, double wall_s) {
    wall += wall_s;
    rays += s.rays_cast;
    hits += s.cache.hits;
    lookups += s.cache.hits + s.cache.misses;
    ++runs;
  }
  BenchReportRow row(const std::string& label, double width, std::size_t n) const {
    return {label, width, n, wall / runs, rays / static_cast<std::uint64_t>(runs),
            lookups ? static_cast<double>(hits) / static_cast<double>(lookups) : 0.0};
  }
};

// One timed run: crop the city to the region, place the TX at its center and drive n receivers.
void timed_region_run(const Scene& city, const SimulationConfig& config, std::mt19937_64& rng, double w,
                      std::size_t n, Accumulator& acc) {
  const Aabb b = city.static_bounds();
  if (!b.valid() || b.max.x - b.min.x < w || b.max.y - b.min.y < w) {
    throw InputError("insufficient scene extent for a " + std::to_string(w) + " m bench region");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x0 = b.min.x + u(rng) * (b.max.x - b.min.x - w);
  const double y0 = b.min.y + u(rng) * (b.max.y - b.min.y - w);
  auto objects = crop(static_objects_of(city), x0, y0, w);
  if (objects.empty()) throw InputError("bench region holds no geometry");

  SimulationConfig c = config;
  c.tx_position = {x0 + 0.5 * w, y0 + 0.5 * w, config.tx_position.z};
  const Scene probe(city.materials(), objects);
  std::vector<Trajectory> receivers;
  for (std::size_t i = 0; i < n; ++i) {
    auto t = random_walk(probe, rng, x0, y0, w, static_cast<std::size_t>(config.bench_steps), config.timestep_s,
                         config.bench_speed_mps, config.rx_height_m);
    t.receiver_id = "rx" + std::to_string(i);
    receivers.push_back(std::move(t));
  }

  const auto start = Clock::now();
  Scene scene(city.materials(), std::move(objects));
  const auto result = run_simulation(scene, receivers, c);
  acc.add(result.summary, seconds_since(start));
}

}  // namespace

std::vector<BenchReportRow> bench_area(const Scene& city, const SimulationConfig& config) {
  std::vector<BenchReportRow> rows;
  for (double w : config.bench_widths) {
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(w * 1000.0));
    Accumulator acc;
    for (int p = 0; p < config.bench_placements; ++p) timed_region_run(city, config, rng, w, config.bench_receivers, acc);
    rows.push_back(acc.row("area", w, config.bench_receivers));
  }
  return rows;
}

std::vector<BenchReportRow> bench_objects(const Scene& city, const SimulationConfig& config) {
  std::vector<BenchReportRow> rows;
  for (std::size_t n : config.bench_object_counts) {
    std::mt19937_64 rng(config.seed + n);
    Accumulator acc;
    for (int p = 0; p < config.bench_placements; ++p) timed_region_run(city, config, rng, config.bench_region_m, n, acc);
    rows.push_back(acc.row("objects", config.bench_region_m, n));
  }
  return rows;
}

StaticDynamicResult bench_static_dynamic(const std::vector<Material>& materials,
                                         const std::vector<SceneObject>& static_objects,
                                         const std::vector<Trajectory>& vehicles, const Trajectory& route,
                                         const SimulationConfig& config) {
  validate(route);
  const int runs = config.static_runs;
  const double dt = (route.t_last() - route.t_first()) / runs;
  if (!(dt > 0.0)) throw InputError("bench route has zero duration");
  SimulationConfig c = config;
  c.timestep_s = dt;
  const std::uint32_t first_id = next_free_id(static_objects);
  const Transmitter tx = c.transmitter();
  const double width = std::max(bounds_between(route, route.t_first(), route.t_last()).extent().x,
                                bounds_between(route, route.t_first(), route.t_last()).extent().y);

  StaticDynamicResult out;
  {
    const auto start = Clock::now();
    Scene scene = with_vehicles(materials, static_objects, vehicles, first_id);
    out.dynamic_run = run_simulation(scene, {route}, c, static_cast<std::size_t>(runs));
    Accumulator acc;
    acc.add(out.dynamic_run.summary, seconds_since(start));
    out.dynamic_row = acc.row("dynamic", width, vehicles.size());
  }
  {
    Accumulator acc;
    RunSummary total;
    const auto start = Clock::now();
    for (int k = 0; k < runs; ++k) {
      const double t = route.t_first() + k * dt;
      Scene scene = with_vehicles(materials, static_objects, vehicles, first_id);
      scene.advance(t);
      const KinematicState ks = sample(route, t);
      auto snap = trace_channel(scene, tx, ks.position, c.trace_config());
      apply_doppler(snap, ks, tx.frequency_hz);
      total.rays_cast += scene.rays_cast();
      out.static_snapshots.push_back(std::move(snap));
    }
    acc.add(total, seconds_since(start));
    out.static_row = acc.row("static", width, vehicles.size());
  }
  return out;
}

StaticDynamicResult bench_static_dynamic(const Scene& city, const SimulationConfig& config) {
  const Aabb b = city.static_bounds();
  if (!b.valid()) throw InputError("bench needs static geometry");
  std::mt19937_64 rng(config.seed);
  const double duration = config.bench_route_length_m / config.bench_speed_mps;
  const double side = std::min(b.max.x - b.min.x, b.max.y - b.min.y);
  const auto runs = static_cast<std::size_t>(config.static_runs);

  Trajectory route = random_walk(city, rng, b.min.x, b.min.y, side, runs, duration / static_cast<double>(runs),
                                 config.bench_speed_mps, config.rx_height_m);
  route.receiver_id = "route";
  std::vector<Trajectory> vehicles;
  const auto vsteps = static_cast<std::size_t>(std::ceil(duration / config.timestep_s));
  for (std::size_t i = 0; i < config.bench_obstacles; ++i) {
    auto v = random_walk(city, rng, b.min.x, b.min.y, side, vsteps, config.timestep_s, config.bench_speed_mps, 0.0);
    v.receiver_id = "vehicle" + std::to_string(i);
    vehicles.push_back(std::move(v));
  }
  return bench_static_dynamic(city.materials(), static_objects_of(city), vehicles, route, config);
}

}  // namespace urbanwave
