#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "urbanwave/errors.hpp"
#include "urbanwave/geometry.hpp"

namespace urbanwave {

Aabb Triangle::bounds() const {
  Aabb b;
  b.expand(v0);
  b.expand(v1);
  b.expand(v2);
  return b;
}

std::optional<double> intersect_triangle(const Triangle& tri, const Vec3& origin, const Vec3& dir) {
  const Vec3 e1 = tri.v1 - tri.v0;
  const Vec3 e2 = tri.v2 - tri.v0;
  const Vec3 p = cross(dir, e2);
  const double det = dot(e1, p);
  const double scale = dot(e1, e1) * dot(dir, dir);
  if (det * det <= 1e-24 * scale * dot(e2, e2)) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 s = origin - tri.v0;
  const double u = dot(s, p) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(dir, q) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return dot(e2, q) * inv_det;
}

bool ray_box(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_min, double t_max) {
  for (int axis = 0; axis < 3; ++axis) {
    double t0 = (box.min[axis] - origin[axis]) * inv_dir[axis];
    double t1 = (box.max[axis] - origin[axis]) * inv_dir[axis];
    // 0 * inf on a flat box along a parallel ray
    if (std::isnan(t0) || std::isnan(t1)) {
      if (origin[axis] < box.min[axis] || origin[axis] > box.max[axis]) return false;
      continue;
    }
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_min > t_max) return false;
  }
  return true;
}

bool outside_any_plane(std::span<const Plane> planes, std::span<const Vec3> pts, double eps) {
  for (const Plane& pl : planes) {
    bool all_out = true;
    for (const Vec3& p : pts) {
      if (pl.side(p) <= eps) {
        all_out = false;
        break;
      }
    }
    if (all_out) return true;
  }
  return false;
}

AabbTree AabbTree::build(std::span<const Aabb> boxes, std::uint32_t leaf_size) {
  AabbTree tree;
  if (boxes.empty()) return tree;
  tree.order_.resize(boxes.size());
  std::iota(tree.order_.begin(), tree.order_.end(), 0u);
  std::vector<Vec3> centroids(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) centroids[i] = boxes[i].centroid();
  tree.nodes_.reserve(2 * boxes.size());
  tree.build_node(boxes, centroids, 0, static_cast<std::uint32_t>(boxes.size()), kNone,
                  std::max(1u, leaf_size), 0);
  return tree;
}

std::uint32_t AabbTree::build_node(std::span<const Aabb> boxes, std::vector<Vec3>& centroids,
                                   std::uint32_t begin, std::uint32_t end, std::uint32_t parent,
                                   std::uint32_t leaf_size, int depth) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  Aabb box;
  Aabb cbox;
  for (std::uint32_t i = begin; i < end; ++i) {
    box.expand(boxes[order_[i]]);
    cbox.expand(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  nodes_[index].parent = parent;
  // depth guard keeps the traversal stack bounded
  if (end - begin <= leaf_size || depth >= 60) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }
  const Vec3 ext = cbox.extent();
  int axis = 0;
  if (ext.y > ext[axis]) axis = 1;
  if (ext.z > ext[axis]) axis = 2;
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroids[a][axis];
                     const double cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  build_node(boxes, centroids, begin, mid, index, leaf_size, depth + 1);
  const std::uint32_t right = build_node(boxes, centroids, mid, end, index, leaf_size, depth + 1);
  nodes_[index].right = right;
  return index;
}

Bvh Bvh::build(std::span<const Triangle> triangles, std::uint32_t id_base) {
  if (triangles.empty()) throw InputError("empty scene");
  std::vector<Aabb> boxes;
  boxes.reserve(triangles.size());
  for (const Triangle& t : triangles) boxes.push_back(t.bounds());
  Bvh bvh;
  bvh.id_base_ = id_base;
  bvh.tree_ = AabbTree::build(boxes, kLeafSize);
  bvh.tris_.reserve(triangles.size());
  for (std::uint32_t src : bvh.tree_.order()) bvh.tris_.push_back(triangles[src]);
  bvh.tri_boxes_.reserve(bvh.tris_.size());
  for (const auto& t : bvh.tris_) bvh.tri_boxes_.push_back(t.bounds());
  const auto& nodes = bvh.tree_.nodes();
  for (std::uint32_t n = 0; n < nodes.size(); ++n) {
    if (!nodes[n].leaf()) continue;
    for (std::uint32_t s = nodes[n].first; s < nodes[n].first + nodes[n].count; ++s) {
      auto& leaves = bvh.object_leaves_[bvh.tris_[s].object_id];
      if (leaves.empty() || leaves.back() != n) leaves.push_back(n);
    }
  }
  bvh.build_cost_ = bvh.compute_cost();
  bvh.current_cost_ = bvh.build_cost_;
  return bvh;
}

double Bvh::compute_cost() const {
  // unit traversal and intersection costs
  double cost = 0.0;
  for (const auto& n : tree_.nodes()) {
    const double sa = n.box.surface_area();
    cost += n.leaf() ? sa * static_cast<double>(n.count) : sa;
  }
  return cost;
}

void Bvh::refit(std::span<const Triangle> current, std::span<const std::uint32_t> moved_objects) {
  last_refit_updates_ = 0;
  if (moved_objects.empty()) return;
  auto& nodes = tree_.nodes();
  std::vector<char> dirty(nodes.size(), 0);
  for (std::uint32_t obj : moved_objects) {
    const auto it = object_leaves_.find(obj);
    if (it == object_leaves_.end()) {
      throw std::invalid_argument("refit: unknown object id " + std::to_string(obj));
    }
    for (std::uint32_t leaf : it->second) {
      if (dirty[leaf]) continue;
      dirty[leaf] = 1;
      Aabb box;
      auto& node = nodes[leaf];
      for (std::uint32_t s = node.first; s < node.first + node.count; ++s) {
        tris_[s] = current[tree_.order()[s]];
        tri_boxes_[s] = tris_[s].bounds();
        box.expand(tri_boxes_[s]);
      }
      node.box = box;
      ++last_refit_updates_;
      for (std::uint32_t p = node.parent; p != AabbTree::kNone && !dirty[p]; p = nodes[p].parent) {
        dirty[p] = 2;
      }
    }
  }
  // parents precede children in depth-first layout
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (dirty[i] != 2) continue;
    Aabb box = nodes[i + 1].box;
    box.expand(nodes[nodes[i].right].box);
    nodes[i].box = box;
    ++last_refit_updates_;
  }
  current_cost_ = compute_cost();
}

std::optional<RayHit> Bvh::intersect(const Vec3& origin, const Vec3& dir, double t_max) const {
  std::optional<RayHit> best;
  double best_t = t_max;
  std::uint32_t best_id = 0;
  std::uint32_t best_slot = 0;
  const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
  const auto& nodes = tree_.nodes();
  if (nodes.empty()) return best;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  bool found = false;
  while (top > 0) {
    const auto& n = nodes[stack[--top]];
    if (!ray_box(n.box, origin, inv, 0.0, best_t)) continue;
    if (n.leaf()) {
      for (std::uint32_t s = n.first; s < n.first + n.count; ++s) {
        const auto t = intersect_triangle(tris_[s], origin, dir);
        if (!t || *t <= 0.0 || *t >= t_max) continue;
        const std::uint32_t id = id_of(s);
        if (!found || *t < best_t || (*t == best_t && id < best_id)) {
          found = true;
          best_t = *t;
          best_id = id;
          best_slot = s;
        }
      }
    } else {
      const auto self = static_cast<std::uint32_t>(&n - nodes.data());
      stack[top++] = n.right;
      stack[top++] = self + 1;
    }
  }
  if (!found) return best;
  Vec3 normal = tris_[best_slot].normal();
  if (dot(normal, dir) > 0.0) normal = -normal;
  return RayHit{best_t, origin + dir * best_t, normal, best_id};
}

bool Bvh::any_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
  const auto& nodes = tree_.nodes();
  if (nodes.empty()) return false;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const auto& n = nodes[stack[--top]];
    if (!ray_box(n.box, origin, inv, t_min, t_max)) continue;
    if (n.leaf()) {
      for (std::uint32_t s = n.first; s < n.first + n.count; ++s) {
        const auto t = intersect_triangle(tris_[s], origin, dir);
        if (t && *t > t_min && *t < t_max) return true;
      }
    } else {
      const auto self = static_cast<std::uint32_t>(&n - nodes.data());
      stack[top++] = n.right;
      stack[top++] = self + 1;
    }
  }
  return false;
}

bool operator==(const Bvh& a, const Bvh& b) {
  if (a.tris_.size() != b.tris_.size() || a.tree_.nodes().size() != b.tree_.nodes().size()) return false;
  for (std::size_t i = 0; i < a.tris_.size(); ++i) {
    const auto& x = a.tris_[i];
    const auto& y = b.tris_[i];
    if (!(x.v0 == y.v0 && x.v1 == y.v1 && x.v2 == y.v2 && x.object_id == y.object_id)) return false;
  }
  for (std::size_t i = 0; i < a.tree_.nodes().size(); ++i) {
    const auto& x = a.tree_.nodes()[i];
    const auto& y = b.tree_.nodes()[i];
    if (!(x.box == y.box && x.first == y.first && x.count == y.count && x.right == y.right)) return false;
  }
  return a.tree_.order() == b.tree_.order() && a.build_cost_ == b.build_cost_ &&
         a.current_cost_ == b.current_cost_;
}

bool should_rebuild(double build_cost, double current_cost, double threshold) {
  if (build_cost <= 0.0) return false;
  return current_cost / build_cost > threshold;
}

bool should_rebuild(const Bvh& bvh, double threshold) {
  return should_rebuild(bvh.build_cost(), bvh.current_cost(), threshold);
}

}  // namespace urbanwave
