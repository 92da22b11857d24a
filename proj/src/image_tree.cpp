#include <algorithm>
#include <array>
#include <cmath>

#include "urbanwave/image_tree.hpp"

namespace urbanwave {

namespace {

// strict-side tolerance for specular validity, meters
constexpr double kSideEps = 1e-9;
// slack used by every conservative culling test, meters
constexpr double kCullEps = 1e-6;
// barycentric tolerances
constexpr double kValidateTol = 1e-9;
constexpr double kCullTol = 1e-6;
// vertex shortening for the convex-occluder visibility test, meters
constexpr double kOccluderShrink = 0.05;

bool triangle_contains(const Triangle& t, const Vec3& p, double tol) {
  const Vec3 e0 = t.v1 - t.v0, e1 = t.v2 - t.v0, e2 = p - t.v0;
  const double d00 = dot(e0, e0), d01 = dot(e0, e1), d11 = dot(e1, e1);
  const double d20 = dot(e2, e0), d21 = dot(e2, e1);
  const double denom = d00 * d11 - d01 * d01;
  if (denom <= 0.0) return false;
  const double v = (d11 * d20 - d01 * d21) / denom;
  const double w = (d00 * d21 - d01 * d20) / denom;
  return v >= -tol && w >= -tol && v + w <= 1.0 + tol;
}

/// Side planes of the beam from `image` through triangle t, plus the window plane; a point is
/// inside the beam iff it is on the non-positive side of all of them.
int beam_planes(const Triangle& t, const Plane& window, const Vec3& image, std::array<Plane, 4>& out) {
  int n = 0;
  const Vec3 v[3] = {t.v0, t.v1, t.v2};
  for (int e = 0; e < 3; ++e) {
    const Vec3& a = v[e];
    const Vec3& b = v[(e + 1) % 3];
    const Vec3& c = v[(e + 2) % 3];
    const Vec3 nrm = cross(a - image, b - image);
    const double len = norm(nrm);
    if (len <= 1e-12 * dot(a - image, a - image)) continue;
    Plane pl{nrm / len, dot(nrm / len, image)};
    if (pl.side(c) > 0.0) pl = pl.flipped();
    out[n++] = pl;
  }
  out[n++] = window.side(image) > 0.0 ? window : window.flipped();
  return n;
}

std::vector<Vec3> face_vertices(const Scene& scene, const Face& face) {
  std::vector<Vec3> verts;
  for (auto ti : face.triangles) {
    const auto& t = scene.triangles()[ti];
    for (const Vec3& v : {t.v0, t.v1, t.v2}) {
      if (std::find(verts.begin(), verts.end(), v) == verts.end()) verts.push_back(v);
    }
  }
  return verts;
}

bool on_reflecting_side(const Face& face, double side_in, double side_out) {
  if (face.one_sided) return side_in > kSideEps && side_out > kSideEps;
  return side_in * side_out > 0.0 && std::abs(side_in) > kSideEps && std::abs(side_out) > kSideEps;
}

}  // namespace

bool face_contains(const Scene& scene, const Face& face, const Vec3& p, double tol) {
  for (auto ti : face.triangles) {
    if (triangle_contains(scene.triangles()[ti], p, tol)) return true;
  }
  return false;
}

bool hidden_by_convex_occluder(const Scene& scene, const Vec3& p, std::uint32_t face_id) {
  const Bvh* bvh = scene.static_bvh();
  if (bvh == nullptr) return false;
  const Face& face = scene.faces()[face_id];
  const auto verts = face_vertices(scene, face);
  double dmin = 1e300, dmax = 0.0;
  for (const auto& v : verts) {
    const double d = distance(p, v);
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  // the shrink must leave a blocking margin above kSurfaceEpsilon at every interior point
  if (kOccluderShrink * dmin / dmax <= 2.0 * kSurfaceEpsilon) return false;

  // the first corner ray finds the candidate occluders; later corners only re-test those
  std::vector<std::uint32_t> candidates;
  bool first = true;
  for (const auto& v : verts) {
    const Vec3 d = v - p;
    const double len = norm(d);
    const double t1 = len - kOccluderShrink;
    if (t1 <= kSurfaceEpsilon) return false;
    const Vec3 dir = d / len;
    if (first) {
      bvh->for_each_hit(p, dir, kSurfaceEpsilon, t1, [&](std::uint32_t tri, double) {
        const std::uint32_t obj = scene.triangles()[tri].object_id;
        if (obj == face.object_id) return;
        if (!scene.object_info()[scene.object_index(obj)].convex) return;
        candidates.push_back(obj);
      });
      std::sort(candidates.begin(), candidates.end());
      candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
      first = false;
    } else {
      std::erase_if(candidates, [&](std::uint32_t obj) {
        const ObjectInfo& info = scene.object_info()[scene.object_index(obj)];
        for (std::uint32_t k = 0; k < info.triangle_count; ++k) {
          const auto t = intersect_triangle(scene.triangles()[info.first_triangle + k], p, dir);
          if (t && *t > kSurfaceEpsilon && *t < t1) return false;
        }
        return true;
      });
    }
    if (candidates.empty()) return false;
  }
  return !candidates.empty();
}

void ImageTree::add_first_bounces(const Scene& scene, bool dynamic_faces) {
  const auto& faces = scene.faces();
  for (std::uint32_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    if (face.dynamic != dynamic_faces) continue;
    const double s = face.plane.side(source_);
    if (face.one_sided ? !(s > kSideEps) : !(std::abs(s) > kSideEps)) continue;
    if (hidden_by_convex_occluder(scene, source_, f)) continue;
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({f, -1, 1, face.plane.mirror(source_)});
    expand(scene, index, true, true);
  }
}

void ImageTree::expand(const Scene& scene, std::uint32_t node, bool static_children, bool dynamic_children) {
  const Node parent = nodes_[node];
  if (parent.depth >= max_order_) return;
  const auto& faces = scene.faces();
  const Face& window = faces[parent.face];

  // most windows are one or two triangles; avoid the heap for those
  constexpr std::size_t kInline = 4;
  std::array<std::array<Plane, 4>, kInline> inline_frusta;
  std::array<int, kInline> inline_counts{};
  std::vector<std::array<Plane, 4>> heap_frusta;
  std::vector<int> heap_counts;
  const std::size_t nt = window.triangles.size();
  if (nt > kInline) {
    heap_frusta.resize(nt);
    heap_counts.resize(nt);
  }
  const std::span<std::array<Plane, 4>> frusta = nt > kInline ? std::span(heap_frusta) : std::span(inline_frusta).first(nt);
  const std::span<int> counts = nt > kInline ? std::span(heap_counts) : std::span(inline_counts).first(nt);
  std::vector<std::uint32_t> candidates;
  for (std::size_t k = 0; k < nt; ++k) {
    counts[k] = beam_planes(scene.triangles()[window.triangles[k]], window.plane, parent.image, frusta[k]);
    const std::span<const Plane> planes(frusta[k].data(), static_cast<std::size_t>(counts[k]));
    auto collect = [&](std::uint32_t tri) { candidates.push_back(scene.face_of_triangle(tri)); };
    if (static_children && scene.static_bvh()) scene.static_bvh()->query_planes(planes, kCullEps, collect);
    if (dynamic_children && scene.dynamic_bvh()) scene.dynamic_bvh()->query_planes(planes, kCullEps, collect);
  }
  if (candidates.empty()) return;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const auto window_verts = face_vertices(scene, window);

  for (std::uint32_t g : candidates) {
    if (g == parent.face) continue;
    const Face& face = faces[g];
    if (!(std::abs(face.plane.side(parent.image)) > kSideEps)) continue;
    if (face.one_sided) {
      double best = -1e300;
      for (const auto& v : window_verts) best = std::max(best, face.plane.side(v));
      if (!(best > -kCullEps)) continue;
    }
    bool in_beam = false;
    for (std::size_t k = 0; k < frusta.size() && !in_beam; ++k) {
      const std::span<const Plane> planes(frusta[k].data(), static_cast<std::size_t>(counts[k]));
      for (auto ti : face.triangles) {
        const auto& t = scene.triangles()[ti];
        const Vec3 pts[3] = {t.v0, t.v1, t.v2};
        if (!outside_any_plane(planes, pts, kCullEps)) {
          in_beam = true;
          break;
        }
      }
    }
    if (!in_beam) continue;
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({g, static_cast<std::int32_t>(node), parent.depth + 1, face.plane.mirror(parent.image)});
    expand(scene, index, true, dynamic_children || face.dynamic);
  }
}

ImageTree ImageTree::build_static(const Scene& scene, const Vec3& source, int max_order) {
  ImageTree tree;
  tree.source_ = source;
  tree.max_order_ = max_order;
  if (max_order < 1) return tree;
  const auto& faces = scene.faces();
  for (std::uint32_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    if (face.dynamic) continue;
    const double s = face.plane.side(source);
    if (face.one_sided ? !(s > kSideEps) : !(std::abs(s) > kSideEps)) continue;
    if (hidden_by_convex_occluder(scene, source, f)) continue;
    const auto index = static_cast<std::uint32_t>(tree.nodes_.size());
    tree.nodes_.push_back({f, -1, 1, face.plane.mirror(source)});
    tree.expand(scene, index, true, false);
  }
  tree.static_count_ = tree.nodes_.size();
  return tree;
}

void ImageTree::extend_dynamic(const Scene& scene) {
  nodes_.resize(static_count_);
  if (max_order_ < 1 || scene.dynamic_bvh() == nullptr) return;
  // static prefixes continued by a moving face
  for (std::uint32_t n = 0; n < static_count_; ++n) expand(scene, n, false, true);
  add_first_bounces(scene, true);
}

ImageTree ImageTree::build(const Scene& scene, const Vec3& source, int max_order) {
  ImageTree tree = build_static(scene, source, max_order);
  tree.extend_dynamic(scene);
  return tree;
}

std::vector<std::uint32_t> ImageTree::face_sequence(std::uint32_t node) const {
  std::vector<std::uint32_t> seq;
  for (std::int32_t n = static_cast<std::int32_t>(node); n >= 0; n = nodes_[n].parent) seq.push_back(nodes_[n].face);
  std::reverse(seq.begin(), seq.end());
  return seq;
}

bool ImageTree::beam_contains(const Scene& scene, std::uint32_t node, const Vec3& p) const {
  const Node& n = nodes_[node];
  const Face& face = scene.faces()[n.face];
  const double si = face.plane.side(n.image);
  const double sp = face.plane.side(p);
  if (si * sp > 0.0 && std::abs(sp) > kCullEps) return false;
  if (si - sp == 0.0) return false;
  const Vec3 hit = n.image + (p - n.image) * (si / (si - sp));
  return face_contains(scene, face, hit, kCullTol);
}

bool ImageTree::beam_may_touch(const Scene& scene, std::uint32_t node, const Aabb& box) const {
  const auto frusta = beam_frusta(scene, node);
  return frusta_may_touch(frusta, box);
}

std::vector<ImageTree::Frustum> ImageTree::beam_frusta(const Scene& scene, std::uint32_t node) const {
  const Node& n = nodes_[node];
  const Face& face = scene.faces()[n.face];
  std::vector<Frustum> out(face.triangles.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].count = beam_planes(scene.triangles()[face.triangles[k]], face.plane, n.image, out[k].planes);
  }
  return out;
}

bool ImageTree::frusta_may_touch(std::span<const Frustum> frusta, const Aabb& box) {
  for (const auto& f : frusta) {
    if (!box_outside_any_plane(std::span<const Plane>(f.planes.data(), static_cast<std::size_t>(f.count)), box,
                               kCullEps)) {
      return true;
    }
  }
  return false;
}

Aabb ImageTree::reach(const Scene& scene, std::uint32_t node, const Aabb& world) const {
  const Node& n = nodes_[node];
  const Face& face = scene.faces()[n.face];
  const double plane_dist = std::abs(face.plane.side(n.image));
  double far = 0.0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner{(c & 1) ? world.max.x : world.min.x, (c & 2) ? world.max.y : world.min.y,
                      (c & 4) ? world.max.z : world.min.z};
    far = std::max(far, distance(n.image, corner));
  }
  if (plane_dist <= 1e-9) return world;
  const double s_max = std::max(1.0, far / plane_dist);
  Aabb box;
  for (const auto& v : face_vertices(scene, face)) {
    box.expand(v);
    box.expand(n.image + (v - n.image) * s_max);
  }
  return box.padded(kCullEps).intersection(world);
}

std::optional<PropagationPath> ImageTree::evaluate(const Scene& scene, const Transmitter& tx, std::uint32_t node,
                                                   const Vec3& rx, CoefficientMode mode, bool include_dynamic) const {
  std::array<std::uint32_t, 8> chain{};
  int k = 0;
  for (std::int32_t n = static_cast<std::int32_t>(node); n >= 0; n = nodes_[n].parent) {
    if (k == static_cast<int>(chain.size())) return std::nullopt;
    chain[k++] = static_cast<std::uint32_t>(n);
  }
  std::reverse(chain.begin(), chain.begin() + k);

  const auto& faces = scene.faces();
  std::array<Vec3, 10> pts;
  pts[0] = tx.position;
  pts[k + 1] = rx;
  Vec3 target = rx;
  for (int j = k; j >= 1; --j) {
    const Node& n = nodes_[chain[j - 1]];
    const Face& face = faces[n.face];
    const double si = face.plane.side(n.image);
    const double st = face.plane.side(target);
    // the image lies behind the reflecting side, the outgoing point in front of it
    if (face.one_sided) {
      if (!(si < -kSideEps && st > kSideEps)) return std::nullopt;
    } else if (!(si * st < 0.0 && std::abs(si) > kSideEps && std::abs(st) > kSideEps)) {
      return std::nullopt;
    }
    const Vec3 p = n.image + (target - n.image) * (si / (si - st));
    if (!face_contains(scene, face, p, kValidateTol)) return std::nullopt;
    pts[j] = p;
    target = p;
  }
  for (int j = 1; j <= k; ++j) {
    const Face& face = faces[nodes_[chain[j - 1]].face];
    if (!on_reflecting_side(face, face.plane.side(pts[j - 1]), face.plane.side(pts[j + 1]))) return std::nullopt;
  }
  for (int j = 0; j <= k; ++j) {
    if (distance(pts[j], pts[j + 1]) <= 2.0 * kSurfaceEpsilon) return std::nullopt;
  }
  for (int j = 0; j <= k; ++j) {
    if (scene.occluded(pts[j], pts[j + 1], include_dynamic)) return std::nullopt;
  }
  std::vector<Interaction> interactions;
  interactions.reserve(static_cast<std::size_t>(k));
  double gain = 0.0;
  for (int j = 1; j <= k; ++j) {
    const std::uint32_t f = nodes_[chain[j - 1]].face;
    interactions.push_back({InteractionKind::Reflection, f, pts[j]});
    gain += reflection_gain_db(scene.material_of_face(f).reflection_coefficient, mode);
  }
  return make_path(tx, rx, std::move(interactions), gain);
}

}  // namespace urbanwave
