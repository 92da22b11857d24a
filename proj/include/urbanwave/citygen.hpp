#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "urbanwave/geometry.hpp"
#include "urbanwave/trajectory.hpp"

namespace urbanwave {

/// Manhattan grid of box buildings centered on the origin. Streets run between blocks along x
/// and y; every block holds one building whose height is drawn uniformly.
struct CityParams {
  double width_m = 800.0;
  double block_m = 40.0;
  double street_m = 20.0;
  double min_height_m = 10.0;
  double max_height_m = 40.0;
  std::uint64_t seed = 42;
};

struct City {
  CityParams params;
  std::vector<Material> materials;  // Wall, Metal
  std::vector<SceneObject> buildings;
  std::vector<double> streets;  // street centerline coordinates, shared by x and y

  std::uint32_t next_id() const { return static_cast<std::uint32_t>(buildings.size()) + 1; }
};

City generate_city(const CityParams& params);

/// Buildings whose footprint overlaps the square [x0, x0 + w] x [y0, y0 + w].
std::vector<SceneObject> crop(const std::vector<SceneObject>& objects, double x0, double y0, double w);

/// Straight drive along a random street, `length_m` long at `speed_mps`, sampled every `dt_s`.
/// The street and the start are drawn so that the route stays inside the square
/// [x0, x0 + w] x [y0, y0 + w]; the lane is lane_fraction * street width to either side of the
/// centerline. The route is shortened to w when longer.
Trajectory random_street_route(const City& city, std::mt19937_64& rng, double length_m, double speed_mps,
                               double dt_s, double height_m, double x0, double y0, double w,
                               double lane_fraction = 0.25);

/// Metal car boxes with ids starting at first_id, each following a random street route at ground level.
/// Returns the objects; trajectories are appended to `routes` in the same order.
std::vector<SceneObject> random_vehicles(const City& city, std::mt19937_64& rng, std::size_t count,
                                         std::uint32_t first_id, double duration_s, double speed_mps,
                                         double dt_s, std::vector<Trajectory>& routes);

}  // namespace urbanwave
