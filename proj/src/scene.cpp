#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "urbanwave/errors.hpp"
#include "urbanwave/geometry.hpp"

namespace urbanwave {

void validate(const Material& m) {
  if (!(m.reflection_coefficient >= 0.0 && m.reflection_coefficient <= 1.0)) {
    throw InputError("material '" + m.name + "': reflection coefficient must lie in [0, 1]");
  }
  if (m.penetration_loss_db && *m.penetration_loss_db < 0.0) {
    throw InputError("material '" + m.name + "': penetration loss must be >= 0 dB");
  }
  if (m.thickness_mm && *m.thickness_mm < 0.0) {
    throw InputError("material '" + m.name + "': thickness must be >= 0 mm");
  }
}

std::vector<Triangle> make_box(const Vec3& base_center, const Vec3& size, std::uint32_t material_id,
                               std::uint32_t object_id) {
  const double hx = size.x / 2, hy = size.y / 2;
  const Vec3 c = base_center;
  const Vec3 p[8] = {
      {c.x - hx, c.y - hy, c.z}, {c.x + hx, c.y - hy, c.z},
      {c.x + hx, c.y + hy, c.z}, {c.x - hx, c.y + hy, c.z},
      {c.x - hx, c.y - hy, c.z + size.z}, {c.x + hx, c.y - hy, c.z + size.z},
      {c.x + hx, c.y + hy, c.z + size.z}, {c.x - hx, c.y + hy, c.z + size.z},
  };
  // counter-clockwise seen from outside
  const int quads[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                           {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}};
  std::vector<Triangle> out;
  out.reserve(12);
  for (const auto& q : quads) {
    out.push_back({p[q[0]], p[q[1]], p[q[2]], material_id, object_id});
    out.push_back({p[q[0]], p[q[2]], p[q[3]], material_id, object_id});
  }
  return out;
}

namespace {

using VertexKey = std::tuple<double, double, double>;
VertexKey key_of(const Vec3& v) { return {v.x, v.y, v.z}; }

Plane plane_of(const Triangle& t, bool flip) {
  const Vec3 n = t.normal();
  Plane pl{n, dot(n, t.v0)};
  return flip ? pl.flipped() : pl;
}

double signed_volume(const std::vector<Triangle>& tris) {
  double v = 0.0;
  for (const auto& t : tris) v += dot(t.v0, cross(t.v1, t.v2));
  return v / 6.0;
}

}  // namespace

Scene::Scene(std::vector<Material> materials, std::vector<SceneObject> objects)
    : materials_(std::move(materials)) {
  for (const auto& m : materials_) validate(m);
  // static objects first so static triangle ids form a prefix
  std::stable_partition(objects.begin(), objects.end(), [](const SceneObject& o) { return !o.is_dynamic; });
  objects_ = std::move(objects);
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    const auto& o = objects_[i];
    if (!index_of_.emplace(o.id, i).second) {
      throw InputError("duplicate object id " + std::to_string(o.id));
    }
    if (!o.is_dynamic && (o.velocity.x != 0 || o.velocity.y != 0 || o.velocity.z != 0)) {
      throw InputError("static object " + std::to_string(o.id) + " has non-zero velocity");
    }
    for (const auto& t : o.triangles) {
      if (t.material_id >= materials_.size()) {
        throw InputError("object " + std::to_string(o.id) + ": material id out of range");
      }
      if (!(t.area() > kMinTriangleArea)) {
        throw InputError("object " + std::to_string(o.id) + ": degenerate triangle");
      }
    }
  }
  build_topology();
}

void Scene::build_topology() {
  triangles_.clear();
  faces_.clear();
  edges_.clear();
  local_edges_.clear();
  face_of_triangle_.clear();
  info_.assign(objects_.size(), {});
  static_triangle_count_ = 0;

  for (std::size_t oi = 0; oi < objects_.size(); ++oi) {
    auto& obj = objects_[oi];
    for (auto& t : obj.triangles) t.object_id = obj.id;
    ObjectInfo& info = info_[oi];
    info.first_triangle = static_cast<std::uint32_t>(triangles_.size());
    info.triangle_count = static_cast<std::uint32_t>(obj.triangles.size());
    info.first_face = static_cast<std::uint32_t>(faces_.size());
    info.first_edge = static_cast<std::uint32_t>(edges_.size());
    if (!obj.is_dynamic) static_triangle_count_ += info.triangle_count;

    // closedness: every undirected edge shared by exactly two triangles
    std::map<std::pair<VertexKey, VertexKey>, std::vector<std::uint32_t>> edge_tris;
    for (std::uint32_t k = 0; k < obj.triangles.size(); ++k) {
      const auto& t = obj.triangles[k];
      const Vec3 v[3] = {t.v0, t.v1, t.v2};
      for (int e = 0; e < 3; ++e) {
        auto a = key_of(v[e]), b = key_of(v[(e + 1) % 3]);
        if (b < a) std::swap(a, b);
        edge_tris[{a, b}].push_back(k);
      }
    }
    info.closed = !edge_tris.empty() &&
                  std::all_of(edge_tris.begin(), edge_tris.end(), [](const auto& kv) { return kv.second.size() == 2; });
    const bool flip = info.closed && signed_volume(obj.triangles) < 0.0;

    // coplanar triangles sharing a material form one face
    std::vector<std::uint32_t> local_face(obj.triangles.size());
    for (std::uint32_t k = 0; k < obj.triangles.size(); ++k) {
      const Triangle world = obj.triangles[k].translated(obj.pose);
      const Plane pl = plane_of(world, flip);
      std::uint32_t found = static_cast<std::uint32_t>(faces_.size());
      for (std::uint32_t f = info.first_face; f < faces_.size(); ++f) {
        const Face& face = faces_[f];
        if (face.material_id == world.material_id && dot(face.plane.normal, pl.normal) > 1.0 - 1e-9 &&
            std::abs(face.plane.offset - pl.offset) <= 1e-7 * (1.0 + std::abs(pl.offset))) {
          found = f;
          break;
        }
      }
      if (found == faces_.size()) {
        Face face;
        face.object_id = obj.id;
        face.material_id = world.material_id;
        face.plane = pl;
        face.one_sided = info.closed;
        face.dynamic = obj.is_dynamic;
        faces_.push_back(face);
      }
      faces_[found].triangles.push_back(static_cast<std::uint32_t>(triangles_.size()));
      local_face[k] = found;
      face_of_triangle_.push_back(found);
      triangles_.push_back(world);
    }
    info.face_count = static_cast<std::uint32_t>(faces_.size()) - info.first_face;

    // diffraction edges: creases and open boundaries, not face diagonals
    for (const auto& [ends, tris] : edge_tris) {
      std::vector<std::uint32_t> adjacent;
      for (auto k : tris) {
        if (std::find(adjacent.begin(), adjacent.end(), local_face[k]) == adjacent.end()) {
          adjacent.push_back(local_face[k]);
        }
      }
      if (tris.size() >= 2 && adjacent.size() < 2) continue;
      const Vec3 a{std::get<0>(ends.first), std::get<1>(ends.first), std::get<2>(ends.first)};
      const Vec3 b{std::get<0>(ends.second), std::get<1>(ends.second), std::get<2>(ends.second)};
      Edge edge;
      edge.a = a + obj.pose;
      edge.b = b + obj.pose;
      edge.object_id = obj.id;
      edge.face0 = static_cast<std::int32_t>(adjacent[0]);
      edge.face1 = adjacent.size() > 1 ? static_cast<std::int32_t>(adjacent[1]) : -1;
      edge.dynamic = obj.is_dynamic;
      edges_.push_back(edge);
      local_edges_.emplace_back(a, b);
    }
    info.edge_count = static_cast<std::uint32_t>(edges_.size()) - info.first_edge;

    info.bounds = Aabb{};
    for (std::uint32_t k = info.first_triangle; k < info.first_triangle + info.triangle_count; ++k) {
      info.bounds.expand(triangles_[k].bounds());
    }
    info.convex = info.closed;
    for (std::uint32_t f = info.first_face; f < info.first_face + info.face_count && info.convex; ++f) {
      const double tol = 1e-7 * (1.0 + std::abs(faces_[f].plane.offset));
      for (std::uint32_t k = info.first_triangle; k < info.first_triangle + info.triangle_count; ++k) {
        const auto& t = triangles_[k];
        if (faces_[f].plane.side(t.v0) > tol || faces_[f].plane.side(t.v1) > tol ||
            faces_[f].plane.side(t.v2) > tol) {
          info.convex = false;
          break;
        }
      }
    }
  }

  static_bounds_ = Aabb{};
  for (std::uint32_t k = 0; k < static_triangle_count_; ++k) static_bounds_.expand(triangles_[k].bounds());

  const std::span<const Triangle> all(triangles_);
  static_bvh_.reset();
  dynamic_bvh_.reset();
  if (static_triangle_count_ > 0) static_bvh_ = Bvh::build(all.first(static_triangle_count_), 0);
  if (triangles_.size() > static_triangle_count_) {
    dynamic_bvh_ = Bvh::build(all.subspan(static_triangle_count_), static_triangle_count_);
  }
}

Aabb Scene::bounds() const {
  Aabb b = static_bounds_;
  for (std::size_t k = static_triangle_count_; k < triangles_.size(); ++k) b.expand(triangles_[k].bounds());
  return b;
}

std::size_t Scene::object_index(std::uint32_t object_id) const {
  const auto it = index_of_.find(object_id);
  if (it == index_of_.end()) throw std::invalid_argument("unknown object id " + std::to_string(object_id));
  return it->second;
}

std::optional<RayHit> Scene::intersect(const Vec3& origin, const Vec3& dir, double t_max) const {
  rays_cast_.add();
  std::optional<RayHit> best;
  if (static_bvh_) best = static_bvh_->intersect(origin, dir, t_max);
  if (dynamic_bvh_) {
    const auto d = dynamic_bvh_->intersect(origin, dir, best ? std::nextafter(best->t, 1e300) : t_max);
    if (d && (!best || d->t < best->t || (d->t == best->t && d->triangle < best->triangle))) best = d;
  }
  return best;
}

bool Scene::occluded(const Vec3& p, const Vec3& q, bool include_dynamic) const {
  rays_cast_.add();
  const Vec3 d = q - p;
  const double len = norm(d);
  if (len <= 2.0 * kSurfaceEpsilon) return false;
  const Vec3 dir = d / len;
  const double t0 = kSurfaceEpsilon, t1 = len - kSurfaceEpsilon;
  if (static_bvh_ && static_bvh_->any_hit(p, dir, t0, t1)) return true;
  return include_dynamic && dynamic_bvh_ && dynamic_bvh_->any_hit(p, dir, t0, t1);
}

std::vector<std::uint32_t> Scene::objects_on_segment(const Vec3& p, const Vec3& q, bool include_dynamic) const {
  rays_cast_.add();
  std::set<std::uint32_t> ids;
  const Vec3 d = q - p;
  const double len = norm(d);
  if (len <= 2.0 * kSurfaceEpsilon) return {};
  const Vec3 dir = d / len;
  auto visit = [&](std::uint32_t tri, double) { ids.insert(triangles_[tri].object_id); };
  if (static_bvh_) static_bvh_->for_each_hit(p, dir, kSurfaceEpsilon, len - kSurfaceEpsilon, visit);
  if (include_dynamic && dynamic_bvh_) {
    dynamic_bvh_->for_each_hit(p, dir, kSurfaceEpsilon, len - kSurfaceEpsilon, visit);
  }
  return {ids.begin(), ids.end()};
}

void Scene::set_trajectory(std::uint32_t object_id, Trajectory traj) {
  const auto& obj = objects_[object_index(object_id)];
  if (!obj.is_dynamic) throw std::invalid_argument("object " + std::to_string(object_id) + " is static");
  validate(traj);
  trajectories_[object_id] = std::move(traj);
}

void Scene::update_object_world(std::size_t index) {
  const SceneObject& obj = objects_[index];
  const ObjectInfo& info = info_[index];
  const bool flip = info.closed && signed_volume(obj.triangles) < 0.0;
  Aabb b;
  for (std::uint32_t k = 0; k < info.triangle_count; ++k) {
    triangles_[info.first_triangle + k] = obj.triangles[k].translated(obj.pose);
    b.expand(triangles_[info.first_triangle + k].bounds());
  }
  for (std::uint32_t f = info.first_face; f < info.first_face + info.face_count; ++f) {
    faces_[f].plane = plane_of(triangles_[faces_[f].triangles.front()], flip);
  }
  for (std::uint32_t e = info.first_edge; e < info.first_edge + info.edge_count; ++e) {
    edges_[e].a = local_edges_[e].first + obj.pose;
    edges_[e].b = local_edges_[e].second + obj.pose;
  }
  info_[index].bounds = b;
}

void Scene::set_pose(std::uint32_t object_id, const Vec3& pose, const Vec3& velocity) {
  const std::size_t i = object_index(object_id);
  auto& obj = objects_[i];
  if (!obj.is_dynamic) throw std::invalid_argument("object " + std::to_string(object_id) + " is static");
  obj.velocity = velocity;
  if (obj.pose == pose) return;
  obj.pose = pose;
  update_object_world(i);
  pending_moves_.push_back(object_id);
}

void Scene::commit_moves() {
  last_refit_updates_ = 0;
  if (pending_moves_.empty() || !dynamic_bvh_) {
    pending_moves_.clear();
    return;
  }
  std::sort(pending_moves_.begin(), pending_moves_.end());
  pending_moves_.erase(std::unique(pending_moves_.begin(), pending_moves_.end()), pending_moves_.end());
  const std::span<const Triangle> dyn = std::span<const Triangle>(triangles_).subspan(static_triangle_count_);
  dynamic_bvh_->refit(dyn, pending_moves_);
  last_refit_updates_ = dynamic_bvh_->last_refit_updates();
  if (should_rebuild(*dynamic_bvh_, rebuild_threshold)) {
    dynamic_bvh_ = Bvh::build(dyn, static_triangle_count_);
    ++rebuild_count_;
  }
  pending_moves_.clear();
}

Scene& Scene::advance(double t) {
  for (const auto& [id, traj] : trajectories_) {
    const KinematicState ks = sample_clamped(traj, t);
    set_pose(id, ks.position, ks.velocity);
  }
  commit_moves();
  time_ = t;
  return *this;
}

}  // namespace urbanwave
