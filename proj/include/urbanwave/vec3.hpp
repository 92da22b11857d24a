#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace urbanwave {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

  constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
inline Vec3 normalized(const Vec3& a) { return a / norm(a); }

inline Vec3 min(const Vec3& a, const Vec3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 max(const Vec3& a, const Vec3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

/// Angle in [0, pi] between two non-zero vectors.
inline double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(norm(cross(a, b)), dot(a, b));
}

struct Aabb {
  Vec3 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity()};
  Vec3 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity()};

  bool valid() const { return min.x <= max.x && min.y <= max.y && min.z <= max.z; }

  void expand(const Vec3& p) {
    min = urbanwave::min(min, p);
    max = urbanwave::max(max, p);
  }
  void expand(const Aabb& b) {
    min = urbanwave::min(min, b.min);
    max = urbanwave::max(max, b.max);
  }
  Aabb padded(double margin) const {
    Aabb out = *this;
    out.min -= Vec3{margin, margin, margin};
    out.max += Vec3{margin, margin, margin};
    return out;
  }

  Vec3 centroid() const { return (min + max) * 0.5; }
  Vec3 extent() const { return max - min; }

  double surface_area() const {
    if (!valid()) return 0.0;
    const Vec3 e = extent();
    return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
  }

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  bool contains(const Aabb& b) const { return contains(b.min) && contains(b.max); }
  bool overlaps(const Aabb& b) const {
    return min.x <= b.max.x && max.x >= b.min.x && min.y <= b.max.y && max.y >= b.min.y &&
           min.z <= b.max.z && max.z >= b.min.z;
  }
  Aabb intersection(const Aabb& b) const {
    return Aabb{urbanwave::max(min, b.min), urbanwave::min(max, b.max)};
  }

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

/// Oriented plane n.x = offset with unit normal n.
struct Plane {
  Vec3 normal;
  double offset = 0.0;

  double side(const Vec3& p) const { return dot(normal, p) - offset; }
  Vec3 mirror(const Vec3& p) const { return p - normal * (2.0 * side(p)); }
  Plane flipped() const { return {-normal, -offset}; }
};

}  // namespace urbanwave
