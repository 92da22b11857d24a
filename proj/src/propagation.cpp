#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "urbanwave/image_tree.hpp"
#include "urbanwave/propagation.hpp"

namespace urbanwave {

Signature PropagationPath::signature() const {
  Signature sig;
  sig.reserve(interactions.size());
  for (const auto& i : interactions) sig.emplace_back(i.kind, i.id);
  return sig;
}

double free_space_loss_db(double d_m, double f_hz) {
  if (!(d_m > 0.0)) throw std::invalid_argument("free_space_loss_db: distance must be positive");
  if (!(f_hz > 0.0)) throw std::invalid_argument("free_space_loss_db: frequency must be positive");
  return 20.0 * std::log10(4.0 * std::numbers::pi * d_m * f_hz / kSpeedOfLight);
}

double knife_edge_loss_db(double nu) {
  if (!(nu > -0.7)) return 0.0;
  const double x = nu - 0.1;
  return 6.9 + 20.0 * std::log10(std::sqrt(x * x + 1.0) + x);
}

double fresnel_parameter(double h_m, double d1_m, double d2_m, double wavelength_m) {
  if (!(d1_m > 0.0) || !(d2_m > 0.0) || !(wavelength_m > 0.0)) {
    throw std::invalid_argument("fresnel_parameter: distances and wavelength must be positive");
  }
  return h_m * std::sqrt(2.0 * (d1_m + d2_m) / (wavelength_m * d1_m * d2_m));
}

double reflection_gain_db(double coefficient, CoefficientMode mode) {
  if (coefficient <= 0.0) return -std::numeric_limits<double>::infinity();
  return (mode == CoefficientMode::Amplitude ? 20.0 : 10.0) * std::log10(coefficient);
}

double aggregate_power_dbm(std::span<const PropagationPath> paths, Combining mode) {
  if (paths.empty()) throw std::invalid_argument("no paths");
  double total_mw = 0.0;
  for (const auto& p : paths) total_mw += std::pow(10.0, p.power_dbm / 10.0);
  if (mode == Combining::Coherent) {
    std::complex<double> sum;
    for (const auto& p : paths) sum += std::polar(std::pow(10.0, p.power_dbm / 20.0), p.phase_rad);
    const double coherent_mw = std::norm(sum);
    // residue of an exact cancellation is rounding noise
    if (coherent_mw <= 1e-20 * total_mw) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(coherent_mw);
  }
  return 10.0 * std::log10(total_mw);
}

double rms_delay_spread_s(std::span<const PropagationPath> paths) {
  if (paths.empty()) return std::numeric_limits<double>::quiet_NaN();
  double w = 0.0, m1 = 0.0, m2 = 0.0;
  for (const auto& p : paths) {
    const double mw = std::pow(10.0, p.power_dbm / 10.0);
    w += mw;
    m1 += mw * p.delay_s;
    m2 += mw * p.delay_s * p.delay_s;
  }
  if (!(w > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  m1 /= w;
  m2 /= w;
  return std::sqrt(std::max(0.0, m2 - m1 * m1));
}

PropagationPath make_path(const Transmitter& tx, const Vec3& rx, std::vector<Interaction> interactions,
                          double gain_db) {
  PropagationPath path;
  path.interactions = std::move(interactions);
  Vec3 prev = tx.position;
  double length = 0.0;
  for (const auto& i : path.interactions) {
    length += distance(prev, i.point);
    prev = i.point;
  }
  length += distance(prev, rx);
  const Vec3 first = path.interactions.empty() ? rx : path.interactions.front().point;
  path.length_m = length;
  path.delay_s = length / kSpeedOfLight;
  path.power_dbm = tx.power_dbm - free_space_loss_db(length, tx.frequency_hz) + gain_db;
  path.phase_rad = std::fmod(2.0 * std::numbers::pi * length / tx.wavelength(), 2.0 * std::numbers::pi);
  path.departure_dir = normalized(first - tx.position);
  path.arrival_dir = normalized(rx - prev);
  return path;
}

std::optional<PropagationPath> trace_los(const Scene& scene, const Transmitter& tx, const Vec3& rx) {
  if (distance(tx.position, rx) <= 2.0 * kSurfaceEpsilon) return std::nullopt;
  if (scene.occluded(tx.position, rx)) return std::nullopt;
  return make_path(tx, rx, {}, 0.0);
}

std::vector<PropagationPath> find_reflection_paths(const Scene& scene, const Transmitter& tx, const Vec3& rx,
                                                   int max_order, CoefficientMode mode) {
  std::vector<PropagationPath> out;
  if (max_order < 1) return out;
  const ImageTree tree = ImageTree::build(scene, tx.position, max_order);
  for (std::uint32_t n = 0; n < tree.nodes().size(); ++n) {
    if (!tree.beam_contains(scene, n, rx)) continue;
    if (auto p = tree.evaluate(scene, tx, n, rx, mode)) out.push_back(std::move(*p));
  }
  return out;
}

namespace {

/// Point on segment [a, b] minimizing |tx - q| + |q - rx|.
Vec3 diffraction_point(const Vec3& a, const Vec3& b, const Vec3& tx, const Vec3& rx) {
  const Vec3 ab = b - a;
  const double len = norm(ab);
  const Vec3 u = ab / len;
  const double s_tx = dot(tx - a, u);
  const double s_rx = dot(rx - a, u);
  const double r_tx = norm(tx - (a + u * s_tx));
  const double r_rx = norm(rx - (a + u * s_rx));
  double s = r_tx + r_rx > 0.0 ? s_tx + (s_rx - s_tx) * r_tx / (r_tx + r_rx) : 0.5 * (s_tx + s_rx);
  s = std::clamp(s, 0.0, len);
  return a + u * s;
}

double distance_to_line(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double len = norm(d);
  if (len == 0.0) return distance(p, a);
  return norm(cross(p - a, d)) / len;
}

bool front(const Scene& scene, std::int32_t face, const Vec3& p) {
  return scene.faces()[static_cast<std::size_t>(face)].plane.side(p) > 0.0;
}

/// Whether p lies outside the solid wedge of a closed object's edge.
bool outside_wedge(const Scene& scene, const Edge& edge, const Vec3& p) {
  const Face& f1 = scene.faces()[static_cast<std::size_t>(edge.face1)];
  const Vec3 probe = scene.triangles()[f1.triangles.front()].centroid();
  const bool convex = scene.faces()[static_cast<std::size_t>(edge.face0)].plane.side(probe) < 0.0;
  const bool a = front(scene, edge.face0, p), b = front(scene, edge.face1, p);
  return convex ? (a || b) : (a && b);
}

}  // namespace

std::vector<PropagationPath> find_diffraction_paths(const Scene& scene, const Transmitter& tx, const Vec3& rx) {
  std::vector<PropagationPath> out;
  const auto blockers = scene.objects_on_segment(tx.position, rx);
  const double lambda = tx.wavelength();
  for (std::uint32_t obj : blockers) {
    const ObjectInfo& info = scene.object_info()[scene.object_index(obj)];
    for (std::uint32_t e = info.first_edge; e < info.first_edge + info.edge_count; ++e) {
      const Edge& edge = scene.edges()[e];
      if (info.closed && edge.face1 >= 0) {
        const bool sil_tx = front(scene, edge.face0, tx.position) != front(scene, edge.face1, tx.position);
        const bool sil_rx = front(scene, edge.face0, rx) != front(scene, edge.face1, rx);
        if (!sil_tx && !sil_rx) continue;
        if (!outside_wedge(scene, edge, tx.position) || !outside_wedge(scene, edge, rx)) continue;
      }
      const Vec3 q = diffraction_point(edge.a, edge.b, tx.position, rx);
      const double d1 = distance(tx.position, q);
      const double d2 = distance(q, rx);
      if (d1 <= 2.0 * kSurfaceEpsilon || d2 <= 2.0 * kSurfaceEpsilon) continue;
      if (scene.occluded(tx.position, q) || scene.occluded(q, rx)) continue;
      const double h = distance_to_line(q, tx.position, rx);
      const double loss = knife_edge_loss_db(fresnel_parameter(h, d1, d2, lambda));
      out.push_back(make_path(tx, rx, {{InteractionKind::Diffraction, e, q}}, -loss));
    }
  }
  return out;
}

void canonicalize(std::vector<PropagationPath>& paths) {
  std::sort(paths.begin(), paths.end(), [](const PropagationPath& a, const PropagationPath& b) {
    if (a.interactions.size() != b.interactions.size()) return a.interactions.size() < b.interactions.size();
    const Signature sa = a.signature(), sb = b.signature();
    if (sa != sb) return sa < sb;
    return a.length_m < b.length_m;
  });
}

ChannelSnapshot make_snapshot(double time_s, std::vector<PropagationPath> paths, Combining mode) {
  ChannelSnapshot snap;
  snap.time_s = time_s;
  canonicalize(paths);
  snap.los = !paths.empty() && paths.front().is_los();
  if (!paths.empty()) snap.total_power_dbm = aggregate_power_dbm(paths, mode);
  snap.paths = std::move(paths);
  return snap;
}

ChannelSnapshot trace_channel(const Scene& scene, const Transmitter& tx, const Vec3& rx, const TraceConfig& config) {
  std::vector<PropagationPath> paths;
  auto los = trace_los(scene, tx, rx);
  if (los) paths.push_back(std::move(*los));
  auto refl = find_reflection_paths(scene, tx, rx, config.max_order, config.coefficient_mode);
  paths.insert(paths.end(), std::make_move_iterator(refl.begin()), std::make_move_iterator(refl.end()));
  if (config.diffraction_enabled && !los) {
    auto diff = find_diffraction_paths(scene, tx, rx);
    paths.insert(paths.end(), std::make_move_iterator(diff.begin()), std::make_move_iterator(diff.end()));
  }
  return make_snapshot(scene.time(), std::move(paths), config.combining);
}

}  // namespace urbanwave
