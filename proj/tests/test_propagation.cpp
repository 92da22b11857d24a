#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "support.hpp"
#include "urbanwave/image_tree.hpp"
#include "urbanwave/propagation.hpp"

using namespace urbanwave;
using testing::box_object;
using testing::default_materials;
using testing::wall_object;

namespace {

Scene empty_scene_with_far_wall() {
  // a tiny wall far away keeps the static BVH non-empty without affecting nearby paths
  return Scene(default_materials(), {wall_object(99, {1000, 1000, 0}, {1001, 1000, 0}, 0, 1)});
}

}  // namespace

TEST_CASE("free-space loss matches Friis") {
  const double expected = 20.0 * std::log10(4.0 * std::numbers::pi * 100.0 * 3e9 / 299792458.0);
  CHECK(free_space_loss_db(100.0, 3e9) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(free_space_loss_db(100.0, 3e9) == doctest::Approx(81.9902).epsilon(1e-6));
  CHECK_THROWS_AS(free_space_loss_db(0.0, 3e9), std::invalid_argument);
  CHECK_THROWS_AS(free_space_loss_db(10.0, 0.0), std::invalid_argument);
  // doubling the distance costs 6.0206 dB
  CHECK(free_space_loss_db(200.0, 3e9) - free_space_loss_db(100.0, 3e9) ==
        doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-12));
}

TEST_CASE("knife-edge loss") {
  CHECK(knife_edge_loss_db(0.0) == doctest::Approx(6.9 + 20.0 * std::log10(std::sqrt(1.01) - 0.1)));
  CHECK(knife_edge_loss_db(0.0) == doctest::Approx(6.0328).epsilon(1e-4));
  CHECK(knife_edge_loss_db(2.0) == doctest::Approx(19.0426).epsilon(1e-4));
  CHECK(knife_edge_loss_db(-0.7) == 0.0);
  CHECK(knife_edge_loss_db(-2.0) == 0.0);
  for (double v = -0.69; v < 5.0; v += 0.1) CHECK(knife_edge_loss_db(v + 0.1) > knife_edge_loss_db(v));
}

TEST_CASE("fresnel parameter") {
  const double lambda = 0.1;
  CHECK(fresnel_parameter(0.0, 10, 10, lambda) == 0.0);
  CHECK(fresnel_parameter(1.0, 50, 50, lambda) == doctest::Approx(std::sqrt(2.0 * 100 / (0.1 * 2500))));
  CHECK_THROWS_AS(fresnel_parameter(1.0, 0, 10, lambda), std::invalid_argument);
}

TEST_CASE("aggregate power") {
  PropagationPath a, b;
  a.power_dbm = -30;
  b.power_dbm = -30;
  std::vector<PropagationPath> two{a, b};
  CHECK(aggregate_power_dbm(two) == doctest::Approx(10.0 * std::log10(2e-3)));
  CHECK(aggregate_power_dbm(std::span<const PropagationPath>(two.data(), 1)) == doctest::Approx(-30.0));
  b.phase_rad = std::numbers::pi;
  std::vector<PropagationPath> opposed{a, b};
  CHECK(aggregate_power_dbm(opposed, Combining::Coherent) == -std::numeric_limits<double>::infinity());
  b.phase_rad = 0.0;
  std::vector<PropagationPath> aligned{a, b};
  CHECK(aggregate_power_dbm(aligned, Combining::Coherent) == doctest::Approx(-30.0 + 20.0 * std::log10(2.0)));
  CHECK_THROWS_WITH_AS(aggregate_power_dbm(std::vector<PropagationPath>{}), "no paths", std::invalid_argument);
}

TEST_CASE("line of sight in open space") {
  const Scene scene = empty_scene_with_far_wall();
  Transmitter tx{{0, 0, 10}, 50.0, 3e9};
  const Vec3 rx{100, 0, 10};
  const auto p = trace_los(scene, tx, rx);
  REQUIRE(p);
  CHECK(p->length_m == doctest::Approx(100.0));
  CHECK(p->delay_s == p->length_m / 299792458.0);
  CHECK(p->power_dbm == doctest::Approx(testing::ref_friis_dbm(50.0, 100.0, 3e9)).epsilon(1e-12));
  CHECK(p->power_dbm == doctest::Approx(-31.9902).epsilon(1e-6));
  const double lambda = 299792458.0 / 3e9;
  CHECK(p->phase_rad == doctest::Approx(std::fmod(2 * std::numbers::pi * 100.0 / lambda, 2 * std::numbers::pi)));
  CHECK(p->arrival_dir.x == doctest::Approx(1.0));
  CHECK(p->departure_dir.x == doctest::Approx(1.0));
}

TEST_CASE("single wall: LoS plus one reflection") {
  // wall in the plane y = 10, TX and RX on the same side
  const Scene scene(default_materials(), {wall_object(1, {-100, 10, 0}, {100, 10, 0}, 0, 50)});
  Transmitter tx{{0, 0, 5}, 50.0, 3e9};
  const Vec3 rx{40, 0, 5};
  const auto snap = trace_channel(scene, tx, rx, {});
  REQUIRE(snap.paths.size() == 2);
  CHECK(snap.los);
  const auto& refl = snap.paths[1];
  REQUIRE(refl.interactions.size() == 1);
  CHECK(refl.interactions[0].point.x == doctest::Approx(20.0));
  CHECK(refl.interactions[0].point.y == doctest::Approx(10.0));
  const double len = 2.0 * std::sqrt(20.0 * 20.0 + 10.0 * 10.0);
  CHECK(refl.length_m == doctest::Approx(len));
  CHECK(refl.power_dbm == doctest::Approx(testing::ref_friis_dbm(50, len, 3e9) + 20 * std::log10(0.8)));
  const double total = 10 * std::log10(std::pow(10, snap.paths[0].power_dbm / 10) + std::pow(10, refl.power_dbm / 10));
  CHECK(*snap.total_power_dbm == doctest::Approx(total));
}

TEST_CASE("power coefficient mode") {
  const Scene scene(default_materials(), {wall_object(1, {-100, 10, 0}, {100, 10, 0}, 0, 50)});
  Transmitter tx{{0, 0, 5}, 50.0, 3e9};
  TraceConfig cfg;
  cfg.coefficient_mode = CoefficientMode::Power;
  const auto snap = trace_channel(scene, tx, {40, 0, 5}, cfg);
  REQUIRE(snap.paths.size() == 2);
  const double len = snap.paths[1].length_m;
  CHECK(snap.paths[1].power_dbm == doctest::Approx(testing::ref_friis_dbm(50, len, 3e9) + 10 * std::log10(0.8)));
}

TEST_CASE("enclosed receiver has no paths") {
  const Scene scene(default_materials(), {box_object(1, {0, 0, 0}, {20, 20, 20})});
  Transmitter tx{{100, 0, 5}, 50.0, 3e9};
  const auto snap = trace_channel(scene, tx, {0, 0, 5}, {});
  CHECK(snap.paths.empty());
  CHECK_FALSE(snap.total_power_dbm);
  CHECK_FALSE(snap.los);
}

TEST_CASE("one-sided faces do not reflect from inside") {
  // receiver inside a hollow closed box sees nothing even though the TX is inside too
  const Scene scene(default_materials(), {box_object(1, {0, 0, 0}, {20, 20, 20})});
  Transmitter tx{{-3, 0, 5}, 50.0, 3e9};
  const auto refl = find_reflection_paths(scene, tx, {3, 0, 5}, 2);
  CHECK(refl.empty());
}

TEST_CASE("thick building admits no single-edge diffraction") {
  // every edge point of a closed box leaves one leg running through the box
  const Scene scene(default_materials(), {box_object(1, {0, 0, 0}, {10, 100, 20})});
  Transmitter tx{{-50, 0, 10}, 50.0, 3e9};
  CHECK_FALSE(trace_los(scene, tx, {50, 0, 10}));
  CHECK(find_diffraction_paths(scene, tx, {50, 0, 10}).empty());
}

TEST_CASE("diffraction around a screen") {
  // open screen in the plane x = 0: y in [-50, 50], z in [0, 20]
  const Scene scene(default_materials(), {wall_object(1, {0, -50, 0}, {0, 50, 0}, 0, 20)});
  Transmitter tx{{-50, 0, 10}, 50.0, 3e9};
  const Vec3 rx{50, 0, 10};
  CHECK_FALSE(trace_los(scene, tx, rx));
  const auto diff = find_diffraction_paths(scene, tx, rx);
  // top, bottom and the two vertical sides; the triangle diagonal is not an edge
  REQUIRE(diff.size() == 4);
  for (const auto& p : diff) {
    REQUIRE(p.interactions.size() == 1);
    CHECK(p.interactions[0].kind == InteractionKind::Diffraction);
    const Vec3 q = p.interactions[0].point;
    CHECK(q.x == doctest::Approx(0.0));
    CHECK(q.y * q.y + (q.z - 10) * (q.z - 10) == doctest::Approx(q.z == doctest::Approx(10.0) ? 2500.0 : 100.0));
    const double d1 = std::sqrt(50 * 50 + q.y * q.y + (q.z - 10) * (q.z - 10));
    const double d2 = d1;
    const double h = std::sqrt(q.y * q.y + (q.z - 10) * (q.z - 10));
    const double nu = h * std::sqrt(2 * (d1 + d2) / (tx.wavelength() * d1 * d2));
    const double loss = 6.9 + 20 * std::log10(std::sqrt((nu - 0.1) * (nu - 0.1) + 1) + nu - 0.1);
    CHECK(p.length_m == doctest::Approx(d1 + d2));
    CHECK(p.power_dbm == doctest::Approx(testing::ref_friis_dbm(50, d1 + d2, 3e9) - loss));
  }
  // diffraction is only added when the direct path is blocked
  const auto snap = trace_channel(scene, tx, rx, {});
  CHECK(snap.paths.size() >= 4);
  TraceConfig no_diff;
  no_diff.diffraction_enabled = false;
  CHECK(trace_channel(scene, tx, rx, no_diff).paths.size() == snap.paths.size() - 4);
}

TEST_CASE("canonical order") {
  PropagationPath los, r1, r2, d;
  r1.interactions = {{InteractionKind::Reflection, 5, {}}};
  r2.interactions = {{InteractionKind::Reflection, 2, {}}, {InteractionKind::Reflection, 1, {}}};
  d.interactions = {{InteractionKind::Diffraction, 0, {}}};
  std::vector<PropagationPath> v{r2, d, r1, los};
  canonicalize(v);
  CHECK(v[0].is_los());
  CHECK(v[1].signature() == r1.signature());
  CHECK(v[2].signature() == d.signature());
  CHECK(v[3].signature() == r2.signature());
}

TEST_CASE("reflections match brute-force enumeration on random scenes") {
  std::mt19937_64 rng(7);
  int total_paths = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Scene scene = testing::random_scene(rng);
    Transmitter tx{testing::random_free_point(scene, rng), 50.0, 3e9};
    for (int r = 0; r < 4; ++r) {
      const Vec3 rxp = testing::random_free_point(scene, rng);
      const auto got = find_reflection_paths(scene, tx, rxp, 2);
      const auto ref = testing::ref_reflections(scene, tx.position, rxp, 2);
      CHECK(got.size() == ref.size());
      for (const auto& path : ref) {
        const auto it = std::find_if(got.begin(), got.end(), [&](const PropagationPath& p) {
          if (p.interactions.size() != path.faces.size()) return false;
          for (std::size_t i = 0; i < path.faces.size(); ++i) {
            if (p.interactions[i].id != path.faces[i]) return false;
          }
          return true;
        });
        REQUIRE(it != got.end());
        for (std::size_t i = 0; i < path.points.size(); ++i) {
          CHECK(distance(it->interactions[i].point, path.points[i]) < 1e-6);
        }
      }
      total_paths += static_cast<int>(ref.size());
    }
  }
  CHECK(total_paths > 30);
}
