#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "urbanwave/citygen.hpp"

namespace urbanwave {

City generate_city(const CityParams& p) {
  if (!(p.width_m > 0.0) || !(p.block_m > 0.0) || !(p.street_m > 0.0)) {
    throw std::invalid_argument("generate_city: sizes must be positive");
  }
  if (!(p.max_height_m >= p.min_height_m) || !(p.min_height_m > 0.0)) {
    throw std::invalid_argument("generate_city: bad height range");
  }
  City city;
  city.params = p;
  city.materials = {{"Wall", 0.8, std::nullopt, std::nullopt}, {"Metal", 0.9, 10.0, 10.0}};
  const double pitch = p.block_m + p.street_m;
  const double half = 0.5 * p.width_m;
  const int blocks = static_cast<int>(std::floor((p.width_m - p.street_m) / pitch));
  for (int i = 0; i <= blocks; ++i) city.streets.push_back(-half + 0.5 * p.street_m + i * pitch);

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> height(p.min_height_m, p.max_height_m);
  for (int ix = 0; ix < blocks; ++ix) {
    for (int iy = 0; iy < blocks; ++iy) {
      const double cx = -half + p.street_m + 0.5 * p.block_m + ix * pitch;
      const double cy = -half + p.street_m + 0.5 * p.block_m + iy * pitch;
      SceneObject o;
      o.id = city.next_id();
      o.name = "building" + std::to_string(o.id);
      o.triangles = make_box({cx, cy, 0.0}, {p.block_m, p.block_m, height(rng)}, 0, o.id);
      city.buildings.push_back(std::move(o));
    }
  }
  return city;
}

std::vector<SceneObject> crop(const std::vector<SceneObject>& objects, double x0, double y0, double w) {
  std::vector<SceneObject> out;
  for (const auto& o : objects) {
    Aabb b;
    for (const auto& t : o.triangles) b.expand(t.bounds());
    b.min = b.min + o.pose;
    b.max = b.max + o.pose;
    if (b.max.x > x0 && b.min.x < x0 + w && b.max.y > y0 && b.min.y < y0 + w) out.push_back(o);
  }
  return out;
}

Trajectory random_street_route(const City& city, std::mt19937_64& rng, double length_m, double speed_mps,
                               double dt_s, double height_m, double x0, double y0, double w, double lane_fraction) {
  if (!(speed_mps > 0.0) || !(dt_s > 0.0) || !(w > 0.0)) throw std::invalid_argument("random_street_route: bad arguments");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool along_x = u(rng) < 0.5;
  const bool forward = u(rng) < 0.5;
  // lateral coordinate lies on the other axis
  const double lo = along_x ? y0 : x0, along_lo = along_x ? x0 : y0;
  std::vector<double> inside;
  for (double s : city.streets) {
    if (s >= lo && s <= lo + w) inside.push_back(s);
  }
  double lateral = lo + 0.5 * w;
  if (!inside.empty()) {
    lateral = inside[std::min(inside.size() - 1, static_cast<std::size_t>(u(rng) * inside.size()))];
    lateral += (u(rng) < 0.5 ? -lane_fraction : lane_fraction) * city.params.street_m;
  }
  const double len = std::min(length_m, w);
  const double start = along_lo + u(rng) * (w - len);
  const double a = forward ? start : start + len;
  const double dir = forward ? 1.0 : -1.0;

  Trajectory t;
  const double duration = len / speed_mps;
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(duration / dt_s - 1e-9)));
  const Vec3 heading = along_x ? Vec3{dir, 0, 0} : Vec3{0, dir, 0};
  for (std::size_t i = 0; i <= n; ++i) {
    const double ti = std::min(i * dt_s, duration);
    const double s = a + dir * speed_mps * ti;
    const Vec3 pos = along_x ? Vec3{s, lateral, height_m} : Vec3{lateral, s, height_m};
    if (i == n && n > 0 && ti <= t.samples.back().t_s) break;
    t.samples.push_back({ti, pos, speed_mps, heading});
  }
  if (t.samples.size() < 2) t.samples.push_back({dt_s, t.samples.front().position, 0.0, heading});
  return t;
}

std::vector<SceneObject> random_vehicles(const City& city, std::mt19937_64& rng, std::size_t count,
                                         std::uint32_t first_id, double duration_s, double speed_mps,
                                         double dt_s, std::vector<Trajectory>& routes) {
  std::vector<SceneObject> out;
  const double half = 0.5 * city.params.width_m;
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject o;
    o.id = first_id + static_cast<std::uint32_t>(i);
    o.name = "vehicle" + std::to_string(o.id);
    o.is_dynamic = true;
    o.triangles = make_box({0, 0, 0}, kDefaultVehicleSize, 1, o.id);
    auto route = random_street_route(city, rng, speed_mps * duration_s, speed_mps, dt_s, 0.0, -half, -half, 2 * half, 0.4);
    route.receiver_id = o.name;
    o.pose = route.samples.front().position;
    out.push_back(std::move(o));
    routes.push_back(std::move(route));
  }
  return out;
}

}  // namespace urbanwave
