#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <optional>
#include <vector>

#include "urbanwave/geometry.hpp"
#include "urbanwave/propagation.hpp"

namespace urbanwave {

/// Candidate specular face sequences seen from a fixed source, stored as a tree of mirror images.
///
/// A node stands for the sequence of faces on its path from the root; its image is the source
/// mirrored across each of them. Children are pruned only by conservative tests (beam frustum,
/// reflecting side, full occlusion of a first-bounce face by a single convex building), so
/// every valid specular path of the scene corresponds to some node. Sequences made only of static
/// faces are built once; sequences touching a moving face form an extension rebuilt per timestep.
class ImageTree {
 public:
  struct Node {
    std::uint32_t face = 0;
    std::int32_t parent = -1;
    int depth = 1;
    Vec3 image;
  };

  ImageTree() = default;

  static ImageTree build_static(const Scene& scene, const Vec3& source, int max_order);
  /// Replaces the moving-face extension with one matching the scene's current poses.
  void extend_dynamic(const Scene& scene);
  /// Static tree plus extension.
  static ImageTree build(const Scene& scene, const Vec3& source, int max_order);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t static_count() const { return static_count_; }
  const Vec3& source() const { return source_; }
  int max_order() const { return max_order_; }

  /// Conservative: true whenever a valid path for this node could end at p.
  bool beam_contains(const Scene& scene, std::uint32_t node, const Vec3& p) const;
  /// Conservative: false only when no point of `box` lies in the node's beam.
  bool beam_may_touch(const Scene& scene, std::uint32_t node, const Aabb& box) const;

  /// Beam of one window triangle: side planes plus the window plane, inside = non-positive side.
  struct Frustum {
    std::array<Plane, 4> planes;
    int count = 0;
  };
  /// One frustum per triangle of the node's face; the beam is their union.
  std::vector<Frustum> beam_frusta(const Scene& scene, std::uint32_t node) const;
  /// beam_may_touch on precomputed frusta.
  static bool frusta_may_touch(std::span<const Frustum> frusta, const Aabb& box);
  /// Bounding box of the node's beam clipped to `world` (invalid when empty).
  Aabb reach(const Scene& scene, std::uint32_t node, const Aabb& world) const;

  /// Exact construction and validation of the node's path to rx.
  std::optional<PropagationPath> evaluate(const Scene& scene, const Transmitter& tx, std::uint32_t node,
                                          const Vec3& rx, CoefficientMode mode, bool include_dynamic = true) const;

  /// Face ids from first to last bounce.
  std::vector<std::uint32_t> face_sequence(std::uint32_t node) const;

 private:
  void expand(const Scene& scene, std::uint32_t node, bool static_children, bool dynamic_children);
  void add_first_bounces(const Scene& scene, bool dynamic_faces);

  std::vector<Node> nodes_;
  std::size_t static_count_ = 0;
  Vec3 source_;
  int max_order_ = 2;
};

/// Whether point p lies inside face (any of its triangles) with barycentric tolerance tol.
bool face_contains(const Scene& scene, const Face& face, const Vec3& p, double tol);

/// True when `face` is certainly invisible from p: each vertex is hidden by the same static
/// convex object.
bool hidden_by_convex_occluder(const Scene& scene, const Vec3& p, std::uint32_t face);

}  // namespace urbanwave
