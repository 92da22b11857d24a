// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "support.hpp"
#include "urbanwave/citygen.hpp"
#include "urbanwave/coherence.hpp"
#include "urbanwave/doppler.hpp"
#include "urbanwave/dynamics.hpp"
#include "urbanwave/io.hpp"
#include "urbanwave/simulation.hpp"

using namespace urbanwave;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// ---- shared desk-scale scenario -------------------------------------------------------------

struct DeskCity {
  City city;
  std::vector<Trajectory> vehicles;
  Trajectory route;
  SimulationConfig config;
};

// 64 buildings in a 500 m grid, 20 cars, one 400 m drive along a street at 10 m/s.
DeskCity desk_city() {
  DeskCity d;
  CityParams p;
  p.width_m = 500;
  p.seed = 7;
  d.city = generate_city(p);
  std::mt19937_64 rng(42);
  random_vehicles(d.city, rng, 20, d.city.next_id(), 40.0, 10.0, 0.5, d.vehicles);
  const auto& s = d.city.streets;
  const double lane = s[2] - 5.0;
  for (int k = 0; k <= 80; ++k) {
    const double x = -200.0 + 5.0 * k;
    d.route.samples.push_back({0.5 * k, {x, lane, 1.5}, 10.0, {1, 0, 0}});
  }
  d.route.receiver_id = "route";
  d.config.tx_position = {s[3] + 4.0, s[3] - 3.0, 25.0};
  d.config.timestep_s = 1.0;
  return d;
}

// ---- criteria -------------------------------------------------------------------------------

Outcome friis() {
  const Scene scene(testing::default_materials(), {testing::wall_object(1, {5000, 5000, 0}, {5001, 5000, 0}, 0, 1)});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(1.0, 2000.0), uf(1e8, 1e11);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const double d = ud(rng), f = uf(rng);
    const Transmitter tx{{0, 0, 10}, 50, f};
    const auto snap = trace_channel(scene, tx, {d, 0, 10}, TraceConfig{});
    if (snap.paths.size() != 1 || !snap.los) return {false, "missing LoS path"};
    const double expect = 50 - 20 * std::log10(4 * std::numbers::pi * d * f / 299792458.0);
    worst = std::max(worst, std::abs(*snap.total_power_dbm - expect));
  }
  return {worst <= 1e-6, fmt("max |error| %.3g dB over 20 pairs", worst)};
}

Outcome reflections() {
  std::mt19937_64 rng(2024);
  std::size_t paths = 0;
  double worst = 0;
  for (int s = 0; s < 100; ++s) {
    const Scene scene = testing::random_scene(rng);
    if (scene.faces().size() > 20) return {false, "scene exceeds 20 faces"};
    for (int pair = 0; pair < 3; ++pair) {
      const Vec3 tx = testing::random_free_point(scene, rng), rx = testing::random_free_point(scene, rng);
      auto got = find_reflection_paths(scene, {tx, 50, 3e9}, rx, 2);
      auto want = testing::ref_reflections(scene, tx, rx, 2);
      if (got.size() != want.size()) {
        return {false, fmt("scene %g: %g paths vs %g from enumeration", s, double(got.size()), double(want.size()))};
      }
      for (const auto& w : want) {
        bool found = false;
        for (const auto& g : got) {
          if (g.interactions.size() != w.faces.size()) continue;
          bool same = true;
          double err = 0;
          for (std::size_t k = 0; k < w.faces.size() && same; ++k) {
            same = g.interactions[k].id == w.faces[k];
            err = std::max(err, distance(g.interactions[k].point, w.points[k]));
          }
          if (same) {
            found = true;
            worst = std::max(worst, err);
          }
        }
        if (!found) return {false, fmt("scene %g: enumerated path not found", s)};
      }
      paths += want.size();
    }
  }
  return {worst <= 1e-6, fmt("100 scenes x 3 pairs, %g paths, max point error %.3g m", double(paths), worst)};
}

Outcome transparency(const DeskCity& d) {
  auto run = [&](bool cache) {
    SimulationConfig c = d.config;
    c.cache_enabled = cache;
    Scene scene = with_vehicles(d.city.materials, d.city.buildings, d.vehicles, 1000);
    return run_simulation(scene, {d.route}, c, 40);
  };
  const auto on = run(true), off = run(false);
  if (on.rows.size() != 40 || off.rows.size() != 40) return {false, "expected 40 steps"};
  double worst = 0;
  std::size_t nlos = 0, multi = 0;
  auto diff = [](double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return 0.0;
    if (a == b) return 0.0;
    return std::abs(a - b);
  };
  for (std::size_t i = 0; i < on.rows.size(); ++i) {
    const auto &a = on.rows[i], &b = off.rows[i];
    if (a.power_dbm.has_value() != b.power_dbm.has_value() || a.n_paths != b.n_paths || a.los != b.los) {
      return {false, fmt("row %g differs in path set", i)};
    }
    if (a.power_dbm) worst = std::max(worst, diff(*a.power_dbm, *b.power_dbm));
    worst = std::max({worst, diff(a.delay_spread_s, b.delay_spread_s), diff(a.doppler_mean_hz, b.doppler_mean_hz),
                      diff(a.doppler_spread_hz, b.doppler_spread_hz)});
    nlos += !a.los;
    multi += a.n_paths > 1;
  }
  const bool big = d.city.buildings.size() >= 50 && d.vehicles.size() >= 20;
  return {big && worst <= 1e-9,
          fmt("%g buildings, %g cars, 40 steps (%g NLoS, %g multipath); max difference", double(d.city.buildings.size()),
              double(d.vehicles.size()), double(nlos), double(multi)) +
              fmt(" %.3g", worst)};
}

Outcome speedup(const DeskCity& d) {
  SimulationConfig c = d.config;
  c.static_runs = 40;
  auto run = [&](const std::vector<Trajectory>& vehicles, double& ratio) -> std::string {
    const auto r = bench_static_dynamic(d.city.materials, d.city.buildings, vehicles, d.route, c);
    // the two methods must also agree on what they computed
    for (std::size_t k = 0; k < r.static_snapshots.size(); ++k) {
      const auto& row = r.dynamic_run.rows[k];
      const auto& snap = r.static_snapshots[k];
      if (row.n_paths != snap.paths.size() || row.power_dbm != snap.total_power_dbm) {
        ratio = 0;
        return fmt("step %g: dynamic and static results differ", k);
      }
    }
    ratio = r.static_row.wall_time_s / r.dynamic_row.wall_time_s;
    return fmt("static %.3f s, dynamic %.3f s, ratio %.2f", r.static_row.wall_time_s, r.dynamic_row.wall_time_s,
               ratio);
  };
  // the timed scenario: the receiver is the only moving object
  double ratio = 0, busy_ratio = 0;
  const std::string timed = run({}, ratio);
  const std::string busy = run(d.vehicles, busy_ratio);
  return {ratio >= 5.0 && busy_ratio > 1.0,
          timed + fmt("; with %g moving cars: ", double(d.vehicles.size())) + busy};
}

Outcome scaling() {
  CityParams p;
  p.width_m = 900;
  p.seed = 11;
  const City city = generate_city(p);
  const Scene scene(city.materials, city.buildings);
  SimulationConfig c;
  c.tx_position.z = 25;
  c.timestep_s = 1.0;
  c.bench_steps = 10;
  c.bench_placements = 10;
  c.bench_receivers = 100;
  c.bench_widths = {50, 100, 200, 400};
  c.bench_object_counts = {10, 1000};
  c.bench_region_m = 400;
  const auto objects = bench_objects(scene, c);
  const double ratio = objects[1].wall_time_s / objects[0].wall_time_s;
  const auto area = bench_area(scene, c);
  // least-squares slope of log(time) against log(area)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(area.size());
  for (const auto& r : area) {
    const double x = std::log(r.area_width_m * r.area_width_m), y = std::log(r.wall_time_s);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  std::string times;
  for (const auto& r : area) times += fmt(" %g:%.4f", r.area_width_m, r.wall_time_s);
  return {ratio < 100.0 && slope <= 1.3,
          fmt("objects 1000/10 ratio %.2f; area exponent %.3f; widths", ratio, slope) + times};
}

Outcome doppler() {
  const double base = doppler_shift(30e9, 10, 0);
  bool ok = std::abs(base - 1000.0) <= 1e-9 * 1000.0;
  std::string detail = fmt("30 GHz at 10 m/s: %.12g Hz", base);

  // 5x ratios from speed scaling in fixed geometries: street canyon and high TX
  const Scene canyon(testing::default_materials(), {testing::wall_object(1, {-600, 10, 0}, {600, 10, 0}, 0, 20),
                                                    testing::wall_object(2, {-600, -10, 0}, {600, -10, 0}, 0, 20)});
  const Transmitter tx{{0, 0, 30}, 50, 30e9};
  auto stats = [&](const Vec3& rx, double v) {
    auto snap = trace_channel(canyon, tx, rx, TraceConfig{});
    apply_doppler(snap, {rx, {v, 0, 0}, 0}, tx.frequency_hz);
    return doppler_stats(snap.paths);
  };
  const Vec3 near{10, 0, 1.5}, far{300, 0, 1.5};
  const auto n10 = stats(near, 10), n50 = stats(near, 50), f10 = stats(far, 10), f50 = stats(far, 50);
  auto five = [](double a, double b) { return std::abs(b - 5 * a) <= 1e-9 * std::max(1.0, std::abs(5 * a)); };
  ok = ok && five(n10.mean_shift_hz, n50.mean_shift_hz) && five(n10.rms_spread_hz, n50.rms_spread_hz) &&
       five(f10.mean_shift_hz, f50.mean_shift_hz) && five(f10.rms_spread_hz, f50.rms_spread_hz);
  // the published pairs themselves
  ok = ok && 27.0 == 5 * 5.4 && 305.0 == 5 * 61.0 && 1880.0 == 5 * 376.0;
  // close range: small mean, large spread; far range: the reverse
  ok = ok && std::abs(n10.mean_shift_hz) < std::abs(f10.mean_shift_hz) && n10.rms_spread_hz > f10.rms_spread_hz;
  detail += fmt("; 10 m: mean %.2f spread %.2f; 300 m: mean %.2f spread %.3f", n10.mean_shift_hz, n10.rms_spread_hz,
                f10.mean_shift_hz, f10.rms_spread_hz);
  return {ok, detail};
}

Outcome coherence() {
  const double t = coherence_time(0.5, 100, 0.1);
  const double half = coherence_time(0.5, 200, 0.1);
  const double rel = std::abs(half - t / 2) / (t / 2);
  return {std::abs(t - 0.61640) <= 1e-4 && rel <= 1e-12, fmt("T = %.6f s, doubling f_D rel error %.3g", t, rel)};
}

Outcome correlation_checks() {
  GainSeries alt, flat, ramp;
  for (int i = 0; i < 20; ++i) {
    alt.t.push_back(0.1 * i);
    alt.g.push_back(i % 2 ? 2.0 : 1.0);
    flat.t.push_back(0.1 * i);
    flat.g.push_back(3.0);
    ramp.t.push_back(0.1 * i);
    ramp.g.push_back(1.0 + 0.3 * i);
  }
  const double r0 = correlation(ramp, 0), r1 = correlation(alt, 1);
  const double printed = correlation(flat, 1, CorrelationVariant::AsPrinted);
  return {std::abs(r0 - 1) <= 1e-12 && std::abs(r1 + 1) <= 1e-12 && printed == 0.0,
          fmt("lag-0 %.15g, alternating lag-1 %.15g, as-printed constant %.3g", r0, r1, printed)};
}

Outcome segmentation() {
  const Scene open(testing::default_materials(), {testing::wall_object(1, {5000, 5000, 0}, {5001, 5000, 0}, 0, 1)});
  const Transmitter tx{{0, 100, 30}, 50, 3e9};
  Trajectory straight;
  for (int i = 0; i <= 50; ++i) straight.samples.push_back({0.1 * i, {1.0 * i, 0, 1.5}, 10, {1, 0, 0}});
  const auto five = segment_trajectory(open, tx, straight);

  // a drive past two buildings with the TX behind them
  const Scene city(testing::default_materials(), {testing::box_object(1, {0, 30, 0}, {30, 20, 25}),
                                                  testing::box_object(2, {70, 30, 0}, {15, 10, 12})});
  const Transmitter tx2{{10, 90, 8}, 50, 3e9};
  Trajectory pass;
  for (int i = 0; i <= 360; ++i) pass.samples.push_back({0.05 * i, {-60.0 + 0.5 * i, 0, 1.5}, 10, {1, 0, 0}});
  const auto segs = segment_trajectory(city, tx2, pass);
  std::vector<double> flips;
  bool prev = !testing::ref_occluded(city, tx2.position, pass.samples.front().position);
  for (double t = 1e-4; t <= pass.t_last(); t += 1e-4) {
    const bool now = !testing::ref_occluded(city, tx2.position, sample(pass, t).position);
    if (now != prev) flips.push_back(t);
    prev = now;
  }
  double worst = 0;
  for (double f : flips) {
    double best = 1e9;
    for (const auto& s : segs) best = std::min(best, std::abs(s.t_start - f));
    worst = std::max(worst, best);
  }
  return {five.size() == 5 && flips.size() >= 2 && worst <= 1e-3,
          fmt("%g segments on 50 m; %g LoS flips, worst boundary offset %.3g s", double(five.size()),
              double(flips.size()), worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& cli) {
  const fs::path dir = fs::temp_directory_path() / ("urbanwave_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string d = dir.string();
  auto sh = [&](const std::string& cmd) { return std::system((cmd + " 2>/dev/null").c_str()); };
  int rc = sh(cli + " gen-city --width 500 --seed 5 --out-obj " + d + "/city.obj --out-materials " + d +
              "/city.mat --routes 12 --route-length 150 --out-routes " + d + "/rx.csv --vehicles 20 --out-vehicles " +
              d + "/veh.csv");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "tx_position=20,10,35\nobstacles=veh.csv\ntimestep_s=0.5\nseed=42\n";
  }
  std::string base = cli + " simulate --config " + d + "/run.cfg --scene " + d + "/city.obj --materials " + d +
                     "/city.mat --trajectories " + d + "/rx.csv --out ";
  rc |= sh("URBANWAVE_WORKERS=1 " + base + d + "/a.csv");
  rc |= sh("URBANWAVE_WORKERS=1 " + base + d + "/b.csv");
  rc |= sh("URBANWAVE_WORKERS=8 " + base + d + "/c.csv");
  if (rc != 0) {
    fs::remove_all(dir);
    return {false, "simulate exited with an error"};
  }
  const std::string a = slurp(dir / "a.csv"), b = slurp(dir / "b.csv"), c = slurp(dir / "c.csv");
  // worker counts only have to agree on values; the writer is deterministic, so compare text too
  const std::size_t lines = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n'));
  fs::remove_all(dir);
  return {a == b && a == c && lines > 100,
          fmt("%g rows; 1 vs 1 worker identical: %g; 1 vs 8 workers identical: %g", double(lines - 1), a == b, a == c)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "urbanwave";
  const DeskCity desk = desk_city();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Friis oracle", friis},
      {"reflection completeness", reflections},
      {"cache transparency", [&] { return transparency(desk); }},
      {"dynamic vs static speedup", [&] { return speedup(desk); }},
      {"scaling shapes", scaling},
      {"Doppler exactness", doppler},
      {"coherence-time algebra", coherence},
      {"correlation", correlation_checks},
      {"segmentation", segmentation},
      {"determinism", [&] { return determinism(cli); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %zu (%s): %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), since(start));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
