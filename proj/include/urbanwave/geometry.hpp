#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "urbanwave/trajectory.hpp"
#include "urbanwave/vec3.hpp"

namespace urbanwave {

/// Endpoint epsilon for visibility segments, in meters.
inline constexpr double kSurfaceEpsilon = 1e-4;

struct Material {
  std::string name;
  double reflection_coefficient = 0.8;  // amplitude, unitless
  std::optional<double> thickness_mm;
  std::optional<double> penetration_loss_db;  // parsed, never applied
};

/// Throws InputError on an out-of-range coefficient or negative loss.
void validate(const Material& m);

struct Triangle {
  Vec3 v0, v1, v2;
  std::uint32_t material_id = 0;
  std::uint32_t object_id = 0;

  Aabb bounds() const;
  Vec3 centroid() const { return (v0 + v1 + v2) / 3.0; }
  /// Unit normal following counter-clockwise winding.
  Vec3 normal() const { return normalized(cross(v1 - v0, v2 - v0)); }
  double area() const { return 0.5 * norm(cross(v1 - v0, v2 - v0)); }
  Triangle translated(const Vec3& d) const { return {v0 + d, v1 + d, v2 + d, material_id, object_id}; }

  friend bool operator==(const Triangle&, const Triangle&) = default;
};

inline constexpr double kMinTriangleArea = 1e-12;

/// Moller-Trumbore; returns the ray parameter of the hit (any sign) or nothing when parallel
/// or outside the triangle.
std::optional<double> intersect_triangle(const Triangle& tri, const Vec3& origin, const Vec3& dir);

struct RayHit {
  double t = 0.0;
  Vec3 point;
  Vec3 normal;  // faces the incoming ray
  std::uint32_t triangle = 0;
};

bool ray_box(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_min, double t_max);

/// Binary tree over axis-aligned boxes in depth-first layout: the left child of node i is i+1.
class AabbTree {
 public:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: offset into order()
    std::uint32_t count = 0;  // leaf: primitive count, 0 for internal nodes
    std::uint32_t right = kNone;
    std::uint32_t parent = kNone;
    bool leaf() const { return count > 0; }
  };

  /// Longest-axis median split on primitive centroids.
  static AabbTree build(std::span<const Aabb> boxes, std::uint32_t leaf_size);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  const std::vector<std::uint32_t>& order() const { return order_; }
  bool empty() const { return nodes_.empty(); }

  /// Visits every primitive in a node whose box passes `accept`.
  template <class Accept, class Visit>
  void traverse(Accept&& accept, Visit&& visit) const {
    if (nodes_.empty()) return;
    std::uint32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& n = nodes_[stack[--top]];
      if (!accept(n.box)) continue;
      if (n.leaf()) {
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) visit(i);
      } else {
        const auto self = static_cast<std::uint32_t>(&n - nodes_.data());
        stack[top++] = n.right;
        stack[top++] = self + 1;
      }
    }
  }

 private:
  std::uint32_t build_node(std::span<const Aabb> boxes, std::vector<Vec3>& centroids,
                           std::uint32_t begin, std::uint32_t end, std::uint32_t parent,
                           std::uint32_t leaf_size, int depth);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

/// True when every point in `pts` lies strictly outside (side > eps) of one of the planes.
bool outside_any_plane(std::span<const Plane> planes, std::span<const Vec3> pts, double eps);
inline bool box_outside_any_plane(std::span<const Plane> planes, const Aabb& box, double eps) {
  for (const Plane& pl : planes) {
    // corner with the smallest signed distance
    const Vec3 near{pl.normal.x >= 0 ? box.min.x : box.max.x, pl.normal.y >= 0 ? box.min.y : box.max.y,
                    pl.normal.z >= 0 ? box.min.z : box.max.z};
    if (pl.side(near) > eps) return true;
  }
  return false;
}

/// Triangle bounding volume hierarchy with per-object refit.
class Bvh {
 public:
  static constexpr std::uint32_t kLeafSize = 4;

  /// Throws InputError("empty scene") on an empty list. Triangle ids reported by queries are
  /// `id_base + index in triangles`.
  static Bvh build(std::span<const Triangle> triangles, std::uint32_t id_base = 0);

  /// Re-expands boxes above the leaves of `moved_objects`, reading their current triangles
  /// from `current` (same order as at build). Throws std::invalid_argument on an unknown id.
  void refit(std::span<const Triangle> current, std::span<const std::uint32_t> moved_objects);

  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_max) const;
  bool any_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;

  /// Calls visit(triangle_id, t) for every hit with t in (t_min, t_max).
  template <class Visit>
  void for_each_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max,
                    Visit&& visit) const {
    const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    tree_.traverse([&](const Aabb& b) { return ray_box(b, origin, inv, t_min, t_max); },
                   [&](std::uint32_t slot) {
                     const auto t = intersect_triangle(tris_[slot], origin, dir);
                     if (t && *t > t_min && *t < t_max) visit(id_of(slot), *t);
                   });
  }

  /// Calls visit(triangle_id) for each triangle whose box is not outside any plane.
  template <class Visit>
  void query_planes(std::span<const Plane> planes, double eps, Visit&& visit) const {
    tree_.traverse([&](const Aabb& b) { return !box_outside_any_plane(planes, b, eps); },
                   [&](std::uint32_t slot) {
                     if (!box_outside_any_plane(planes, tri_boxes_[slot], eps)) visit(id_of(slot));
                   });
  }

  template <class Visit>
  void query_box(const Aabb& box, Visit&& visit) const {
    tree_.traverse([&](const Aabb& b) { return b.overlaps(box); },
                   [&](std::uint32_t slot) {
                     if (tri_boxes_[slot].overlaps(box)) visit(id_of(slot));
                   });
  }

  double build_cost() const { return build_cost_; }
  double current_cost() const { return current_cost_; }
  std::size_t node_count() const { return tree_.nodes().size(); }
  std::size_t triangle_count() const { return tris_.size(); }
  /// Nodes whose box was recomputed by the most recent refit.
  std::size_t last_refit_updates() const { return last_refit_updates_; }
  const AabbTree& tree() const { return tree_; }
  /// Triangles in leaf order.
  const std::vector<Triangle>& leaf_triangles() const { return tris_; }
  std::uint32_t id_of(std::uint32_t slot) const { return id_base_ + tree_.order()[slot]; }

  friend bool operator==(const Bvh& a, const Bvh& b);

 private:
  double compute_cost() const;

  AabbTree tree_;
  std::vector<Triangle> tris_;
  std::vector<Aabb> tri_boxes_;  // bounds of tris_, kept in step with refit
  std::uint32_t id_base_ = 0;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> object_leaves_;
  double build_cost_ = 0.0;
  double current_cost_ = 0.0;
  std::size_t last_refit_updates_ = 0;
};

/// True iff current_cost / build_cost > threshold.
bool should_rebuild(double build_cost, double current_cost, double threshold = 1.5);
bool should_rebuild(const Bvh& bvh, double threshold = 1.5);

struct SceneObject {
  std::uint32_t id = 0;
  std::string name;
  std::vector<Triangle> triangles;  // object frame; world = object frame + pose
  bool is_dynamic = false;
  Vec3 pose;
  Vec3 velocity;
};

/// Axis-aligned box mesh (12 triangles, outward winding) with its base centered at `base_center`.
std::vector<Triangle> make_box(const Vec3& base_center, const Vec3& size, std::uint32_t material_id,
                               std::uint32_t object_id);

/// Default moving-object footprint: a car-sized metal box.
inline constexpr Vec3 kDefaultVehicleSize{4.5, 1.8, 1.5};

/// Coplanar triangles of one object sharing a material: the unit of specular reflection.
struct Face {
  std::uint32_t object_id = 0;
  std::uint32_t material_id = 0;
  Plane plane;             // outward for closed objects
  bool one_sided = false;  // closed objects reflect on the outward side only
  bool dynamic = false;
  std::vector<std::uint32_t> triangles;
};

/// Mesh edge used for diffraction: a crease between two faces or an open boundary.
struct Edge {
  Vec3 a, b;
  std::uint32_t object_id = 0;
  std::int32_t face0 = -1;
  std::int32_t face1 = -1;  // -1 for boundary edges
  bool dynamic = false;
};

struct ObjectInfo {
  std::uint32_t first_triangle = 0, triangle_count = 0;
  std::uint32_t first_face = 0, face_count = 0;
  std::uint32_t first_edge = 0, edge_count = 0;
  bool closed = false;
  bool convex = false;
  Aabb bounds;
};

/// Copyable relaxed atomic counter for instrumentation.
struct RelaxedCounter {
  mutable std::atomic<std::uint64_t> value{0};
  RelaxedCounter() = default;
  RelaxedCounter(const RelaxedCounter& o) : value(o.value.load(std::memory_order_relaxed)) {}
  RelaxedCounter& operator=(const RelaxedCounter& o) {
    value.store(o.value.load(std::memory_order_relaxed), std::memory_order_relaxed);
    return *this;
  }
  void add(std::uint64_t n = 1) const { value.fetch_add(n, std::memory_order_relaxed); }
};

/// Static buildings plus kinematic objects with a static BVH that is never refit and a dynamic
/// BVH that is refit (or rebuilt) whenever the scene advances.
class Scene {
 public:
  Scene() = default;
  Scene(std::vector<Material> materials, std::vector<SceneObject> objects);

  const std::vector<Material>& materials() const { return materials_; }
  const std::vector<SceneObject>& objects() const { return objects_; }
  const std::vector<ObjectInfo>& object_info() const { return info_; }
  /// World-space triangles: static objects first, then dynamic.
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::uint32_t face_of_triangle(std::uint32_t tri) const { return face_of_triangle_[tri]; }
  std::uint32_t static_triangle_count() const { return static_triangle_count_; }
  const Material& material_of_face(std::uint32_t face) const { return materials_[faces_[face].material_id]; }

  const Bvh* static_bvh() const { return static_bvh_ ? &*static_bvh_ : nullptr; }
  const Bvh* dynamic_bvh() const { return dynamic_bvh_ ? &*dynamic_bvh_ : nullptr; }

  /// Bounds of static geometry (invalid when there is none).
  const Aabb& static_bounds() const { return static_bounds_; }
  Aabb bounds() const;

  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_max) const;
  /// True iff a triangle crosses the open segment (p, q) shortened by kSurfaceEpsilon at both ends.
  bool occluded(const Vec3& p, const Vec3& q, bool include_dynamic = true) const;
  /// Sorted ids of objects crossed by the shortened segment (p, q).
  std::vector<std::uint32_t> objects_on_segment(const Vec3& p, const Vec3& q,
                                                bool include_dynamic = true) const;

  /// Associates a trajectory with a dynamic object; advance() follows it (clamped to its span).
  void set_trajectory(std::uint32_t object_id, Trajectory traj);
  /// Poses every tracked dynamic object at time t and refits the dynamic BVH, rebuilding it
  /// when the refit cost ratio exceeds the rebuild threshold.
  Scene& advance(double t);
  /// Sets the pose of one dynamic object; call commit_moves() to refit afterwards.
  void set_pose(std::uint32_t object_id, const Vec3& pose, const Vec3& velocity = {});
  void commit_moves();

  double time() const { return time_; }
  std::size_t object_index(std::uint32_t object_id) const;
  bool has_dynamic() const { return dynamic_bvh_.has_value(); }

  double rebuild_threshold = 1.5;
  std::size_t rebuild_count() const { return rebuild_count_; }
  std::size_t last_refit_updates() const { return last_refit_updates_; }

  /// Occlusion and intersection rays cast so far.
  std::uint64_t rays_cast() const { return rays_cast_.value.load(std::memory_order_relaxed); }

 private:
  void build_topology();
  void update_object_world(std::size_t index);

  std::vector<Material> materials_;
  std::vector<SceneObject> objects_;
  std::vector<ObjectInfo> info_;
  std::unordered_map<std::uint32_t, std::size_t> index_of_;
  std::vector<Triangle> triangles_;
  std::vector<std::uint32_t> face_of_triangle_;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
  std::vector<std::pair<Vec3, Vec3>> local_edges_;
  std::uint32_t static_triangle_count_ = 0;
  std::optional<Bvh> static_bvh_;
  std::optional<Bvh> dynamic_bvh_;
  Aabb static_bounds_;
  std::map<std::uint32_t, Trajectory> trajectories_;
  std::vector<std::uint32_t> pending_moves_;
  double time_ = 0.0;
  std::size_t rebuild_count_ = 0;
  std::size_t last_refit_updates_ = 0;
  RelaxedCounter rays_cast_;
};

}  // namespace urbanwave
