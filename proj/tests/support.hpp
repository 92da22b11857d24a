#pragma once

// Test fixtures and independent reference implementations. The reference code deliberately
// avoids the library's BVH, image tree and intersection routines.

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "urbanwave/geometry.hpp"
#include "urbanwave/propagation.hpp"

namespace testing {

using urbanwave::Vec3;

inline std::vector<urbanwave::Material> default_materials() {
  return {{"Wall", 0.8, std::nullopt, std::nullopt}, {"Metal", 0.9, 10.0, 10.0}};
}

/// `base` is the center of the footprint at ground level.
inline urbanwave::SceneObject box_object(std::uint32_t id, const Vec3& base, const Vec3& size,
                                         std::uint32_t material = 0, bool dynamic = false) {
  urbanwave::SceneObject o;
  o.id = id;
  o.name = "box" + std::to_string(id);
  o.is_dynamic = dynamic;
  if (dynamic) {
    o.triangles = urbanwave::make_box({0, 0, 0}, size, material, id);
    o.pose = base;
  } else {
    o.triangles = urbanwave::make_box(base, size, material, id);
  }
  return o;
}

/// Vertical rectangle from (a.x, a.y) to (b.x, b.y), z in [z0, z1]; an open two-sided surface.
inline urbanwave::SceneObject wall_object(std::uint32_t id, Vec3 a, Vec3 b, double z0, double z1,
                                          std::uint32_t material = 0) {
  urbanwave::SceneObject o;
  o.id = id;
  o.name = "wall" + std::to_string(id);
  const Vec3 p0{a.x, a.y, z0}, p1{b.x, b.y, z0}, p2{b.x, b.y, z1}, p3{a.x, a.y, z1};
  o.triangles.push_back({p0, p1, p2, material, id});
  o.triangles.push_back({p0, p2, p3, material, id});
  return o;
}

// ---- reference geometry -------------------------------------------------------------------

/// Parameter t in (0, 1) where segment p->q crosses the triangle, by solving the 3x3 system with
/// Cramer's rule.
inline std::optional<double> ref_segment_triangle(const Vec3& p, const Vec3& q, const Vec3& a, const Vec3& b,
                                                  const Vec3& c) {
  // p + t (q - p) = a + u (b - a) + v (c - a)
  const Vec3 d = q - p, e1 = b - a, e2 = c - a, r = p - a;
  auto det3 = [](const Vec3& x, const Vec3& y, const Vec3& z) {
    return x.x * (y.y * z.z - y.z * z.y) - y.x * (x.y * z.z - x.z * z.y) + z.x * (x.y * y.z - x.z * y.y);
  };
  const Vec3 nd = d * -1.0;
  const double det = det3(nd, e1, e2);
  if (std::abs(det) < 1e-15) return std::nullopt;
  const double t = det3(r, e1, e2) / det;
  const double u = det3(nd, r, e2) / det;
  const double v = det3(nd, e1, r) / det;
  if (u < 0 || v < 0 || u + v > 1) return std::nullopt;
  return t;
}

/// Brute-force occlusion over every triangle, endpoints shortened by 1e-4 m.
inline bool ref_occluded(const urbanwave::Scene& scene, const Vec3& p, const Vec3& q) {
  const double len = urbanwave::distance(p, q);
  if (len <= 2e-4) return false;
  const double lo = 1e-4 / len, hi = 1.0 - 1e-4 / len;
  for (const auto& t : scene.triangles()) {
    const auto s = ref_segment_triangle(p, q, t.v0, t.v1, t.v2);
    if (s && *s > lo && *s < hi) return true;
  }
  return false;
}

inline Vec3 ref_mirror(const Vec3& p, const Vec3& n, double offset) {
  const double s = p.x * n.x + p.y * n.y + p.z * n.z - offset;
  return {p.x - 2 * s * n.x, p.y - 2 * s * n.y, p.z - 2 * s * n.z};
}

inline bool ref_in_triangle(const Vec3& p, const urbanwave::Triangle& t, double tol) {
  // same-side test with areas, scaled by the triangle's own area
  const Vec3 n = urbanwave::cross(t.v1 - t.v0, t.v2 - t.v0);
  const double nn = urbanwave::dot(n, n);
  const double a = urbanwave::dot(urbanwave::cross(t.v1 - p, t.v2 - p), n) / nn;
  const double b = urbanwave::dot(urbanwave::cross(t.v2 - p, t.v0 - p), n) / nn;
  const double c = 1.0 - a - b;
  return a >= -tol && b >= -tol && c >= -tol;
}

struct RefPath {
  std::vector<std::uint32_t> faces;
  std::vector<Vec3> points;
};

/// All specular paths up to max_order, by enumerating every ordered face sequence without
/// immediate repeats.
inline std::vector<RefPath> ref_reflections(const urbanwave::Scene& scene, const Vec3& tx, const Vec3& rx,
                                            int max_order) {
  const auto& faces = scene.faces();
  std::vector<RefPath> out;
  std::vector<std::vector<std::uint32_t>> seqs;
  for (std::uint32_t f = 0; f < faces.size(); ++f) seqs.push_back({f});
  if (max_order >= 2) {
    for (std::uint32_t f = 0; f < faces.size(); ++f) {
      for (std::uint32_t g = 0; g < faces.size(); ++g) {
        if (f != g) seqs.push_back({f, g});
      }
    }
  }
  for (const auto& seq : seqs) {
    const std::size_t k = seq.size();
    std::vector<Vec3> images{tx};
    for (auto f : seq) images.push_back(ref_mirror(images.back(), faces[f].plane.normal, faces[f].plane.offset));
    std::vector<Vec3> pts(k + 2);
    pts[0] = tx;
    pts[k + 1] = rx;
    bool ok = true;
    Vec3 target = rx;
    for (std::size_t j = k; j >= 1 && ok; --j) {
      const auto& pl = faces[seq[j - 1]].plane;
      const Vec3 img = images[j];
      const double si = urbanwave::dot(img, pl.normal) - pl.offset;
      const double st = urbanwave::dot(target, pl.normal) - pl.offset;
      if (si * st >= 0) {
        ok = false;
        break;
      }
      const Vec3 p = img + (target - img) * (si / (si - st));
      bool inside = false;
      for (auto ti : faces[seq[j - 1]].triangles) inside = inside || ref_in_triangle(p, scene.triangles()[ti], 1e-9);
      if (!inside) ok = false;
      pts[j] = p;
      target = p;
    }
    if (!ok) continue;
    for (std::size_t j = 1; j <= k && ok; ++j) {
      const auto& face = faces[seq[j - 1]];
      const double a = urbanwave::dot(pts[j - 1], face.plane.normal) - face.plane.offset;
      const double b = urbanwave::dot(pts[j + 1], face.plane.normal) - face.plane.offset;
      if (face.one_sided) {
        ok = a > 1e-9 && b > 1e-9;
      } else {
        ok = a * b > 0 && std::abs(a) > 1e-9 && std::abs(b) > 1e-9;
      }
    }
    for (std::size_t j = 0; j <= k && ok; ++j) {
      ok = urbanwave::distance(pts[j], pts[j + 1]) > 2e-4 && !ref_occluded(scene, pts[j], pts[j + 1]);
    }
    if (ok) out.push_back({seq, std::vector<Vec3>(pts.begin() + 1, pts.end() - 1)});
  }
  return out;
}

/// Friis received power computed from scratch.
inline double ref_friis_dbm(double p_tx_dbm, double d, double f) {
  const double lambda = 299792458.0 / f;
  return p_tx_dbm + 20.0 * std::log10(lambda / (4.0 * 3.14159265358979323846 * d));
}

/// Up to three non-overlapping boxes plus an optional free-standing wall, at most 20 faces.
inline urbanwave::Scene random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<urbanwave::SceneObject> objs;
  const int n_boxes = 1 + static_cast<int>(u(rng) * 3.0);
  const Vec3 slots[3] = {{-30, 0, 0}, {0, 30, 0}, {30, -10, 0}};
  for (int i = 0; i < n_boxes; ++i) {
    const Vec3 size{8 + 14 * u(rng), 8 + 14 * u(rng), 5 + 25 * u(rng)};
    const Vec3 base = slots[i] + Vec3{8 * (u(rng) - 0.5), 8 * (u(rng) - 0.5), 0};
    objs.push_back(box_object(static_cast<std::uint32_t>(i + 1), base, size, u(rng) < 0.5 ? 0u : 1u));
  }
  if (u(rng) < 0.6) {
    const Vec3 a{-20 + 10 * u(rng), -35 + 5 * u(rng), 0}, b{20 + 10 * u(rng), -30 + 5 * u(rng), 0};
    objs.push_back(wall_object(10, a, b, 0.0, 5 + 20 * u(rng)));
  }
  return urbanwave::Scene(default_materials(), std::move(objs));
}

inline bool inside_any_box(const urbanwave::Scene& scene, const Vec3& p) {
  for (const auto& info : scene.object_info()) {
    if (info.closed && info.bounds.padded(0.5).contains(p)) return true;
  }
  return false;
}

inline Vec3 random_free_point(const urbanwave::Scene& scene, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xy(-45.0, 45.0), z(1.0, 20.0);
  for (;;) {
    const Vec3 p{xy(rng), xy(rng), z(rng)};
    if (!inside_any_box(scene, p)) return p;
  }
}

}  // namespace testing
