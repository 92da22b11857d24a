#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "urbanwave/citygen.hpp"
#include "urbanwave/config.hpp"
#include "urbanwave/errors.hpp"
#include "urbanwave/io.hpp"
#include "urbanwave/simulation.hpp"

using namespace urbanwave;

namespace {

struct Inputs {
  std::string config, scene, materials;
};

void add_inputs(CLI::App* cmd, Inputs& in) {
  cmd->add_option("--config", in.config, "key=value configuration file")->required();
  cmd->add_option("--scene", in.scene, "OBJ scene")->required();
  cmd->add_option("--materials", in.materials, "material sidecar")->required();
}

// Static scene from disk plus the configured moving obstacles.
Scene load_world(const Inputs& in, const SimulationConfig& config) {
  std::vector<std::string> warnings;
  Scene scene = load_scene(in.scene, in.materials, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (config.obstacles.empty()) return scene;
  const auto vehicles = load_trajectories(config.obstacles, config.rx_height_m);
  std::uint32_t next = 0;
  for (const auto& o : scene.objects()) next = std::max(next, o.id);
  return with_vehicles(scene.materials(), scene.objects(), vehicles, next + 1);
}

std::vector<double> parse_region(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw InputError("");
    } catch (const std::exception&) {
      throw InputError("--region expects x0,y0,x1,y1");
    }
  }
  if (v.size() != 4) throw InputError("--region expects x0,y0,x1,y1");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic ray-tracing channel simulator for urban scenes"};
  app.require_subcommand(1);

  Inputs sim_in;
  std::string trajectories, sim_out;
  auto* simulate = app.add_subcommand("simulate", "trace receivers along their trajectories");
  add_inputs(simulate, sim_in);
  simulate->add_option("--trajectories", trajectories, "SUMO FCD (.xml) or CSV")->required();
  simulate->add_option("--out", sim_out, "power trace CSV")->required();

  Inputs heat_in;
  double heat_time = 0.0, cell = 5.0;
  std::string region, heat_out;
  auto* heatmap = app.add_subcommand("heatmap", "received power over a grid of static receivers");
  add_inputs(heatmap, heat_in);
  heatmap->add_option("--time", heat_time, "scene time in s");
  heatmap->add_option("--region", region, "x0,y0,x1,y1")->required();
  heatmap->add_option("--cell", cell, "cell size in m");
  heatmap->add_option("--out", heat_out, "heatmap CSV")->required();

  Inputs bench_in;
  std::string mode, bench_out;
  auto* bench = app.add_subcommand("bench", "scaling and static-vs-dynamic timing");
  add_inputs(bench, bench_in);
  bench->add_option("--mode", mode, "area, objects or staticdynamic")
      ->required()
      ->check(CLI::IsMember({"area", "objects", "staticdynamic"}));
  bench->add_option("--out", bench_out, "bench report CSV")->required();

  CityParams city;
  std::string city_obj, city_mat, routes_out, vehicles_out;
  std::size_t n_routes = 0, n_vehicles = 0;
  double route_len = 400.0, speed = 10.0, dt = 0.1, rx_height = 1.5;
  auto* gen = app.add_subcommand("gen-city", "write a synthetic grid city and optional trajectories");
  gen->add_option("--width", city.width_m, "city width in m");
  gen->add_option("--block", city.block_m, "block size in m");
  gen->add_option("--street", city.street_m, "street width in m");
  gen->add_option("--seed", city.seed, "random seed");
  gen->add_option("--out-obj", city_obj, "OBJ output")->required();
  gen->add_option("--out-materials", city_mat, "material sidecar output")->required();
  gen->add_option("--routes", n_routes, "number of receiver routes");
  gen->add_option("--route-length", route_len, "route length in m");
  gen->add_option("--speed", speed, "speed in m/s");
  gen->add_option("--dt", dt, "sample spacing in s");
  gen->add_option("--rx-height", rx_height, "receiver height in m");
  gen->add_option("--out-routes", routes_out, "receiver trajectories CSV");
  gen->add_option("--vehicles", n_vehicles, "number of moving vehicles");
  gen->add_option("--out-vehicles", vehicles_out, "vehicle trajectories CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*simulate) {
      const auto config = load_config(sim_in.config);
      Scene scene = load_world(sim_in, config);
      const auto receivers = load_trajectories(trajectories, config.rx_height_m);
      const auto result = run_simulation(scene, receivers, config);
      write_power_trace(result.rows, sim_out);
      write_summary(result.summary, config, sim_out + ".summary.json");
      std::cerr << "simulated " << result.summary.rows << " rows in " << result.summary.wall_time_s << " s\n";
    } else if (*heatmap) {
      const auto config = load_config(heat_in.config);
      Scene scene = load_world(heat_in, config);
      const auto r = parse_region(region);
      write_heatmap(compute_heatmap(scene, config, heat_time, r[0], r[1], r[2], r[3], cell), heat_out);
    } else if (*bench) {
      const auto config = load_config(bench_in.config);
      std::vector<std::string> warnings;
      const Scene scene = load_scene(bench_in.scene, bench_in.materials, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      std::vector<BenchReportRow> rows;
      if (mode == "area") {
        rows = bench_area(scene, config);
      } else if (mode == "objects") {
        rows = bench_objects(scene, config);
      } else {
        const auto r = bench_static_dynamic(scene, config);
        rows = {r.dynamic_row, r.static_row};
      }
      write_bench_report(rows, bench_out);
    } else if (*gen) {
      const City c = generate_city(city);
      write_scene(c.buildings, c.materials, city_obj, city_mat);
      std::mt19937_64 rng(city.seed + 1);
      const double half = 0.5 * city.width_m;
      if (n_routes > 0) {
        if (routes_out.empty()) throw InputError("--routes needs --out-routes");
        std::vector<Trajectory> routes;
        for (std::size_t i = 0; i < n_routes; ++i) {
          auto t = random_street_route(c, rng, route_len, speed, dt, rx_height, -half, -half, 2 * half);
          t.receiver_id = "rx" + std::to_string(i);
          routes.push_back(std::move(t));
        }
        write_csv_trajectories(routes, routes_out);
      }
      if (n_vehicles > 0) {
        if (vehicles_out.empty()) throw InputError("--vehicles needs --out-vehicles");
        std::vector<Trajectory> vehicles;
        random_vehicles(c, rng, n_vehicles, c.next_id(), route_len / speed, speed, dt, vehicles);
        write_csv_trajectories(vehicles, vehicles_out);
      }
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
