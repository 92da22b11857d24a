#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "urbanwave/dynamics.hpp"

namespace urbanwave {

LinkState los_state(const Scene& scene, const Transmitter& tx, const Vec3& pos, bool include_dynamic) {
  return scene.occluded(tx.position, pos, include_dynamic) ? LinkState::NLoS : LinkState::LoS;
}

namespace {

struct ProbeState {
  LinkState link = LinkState::LoS;
  std::int64_t primary_face = -1;  // strongest first-order reflection, -1 for none

  bool operator==(const ProbeState&) const = default;
};

class Prober {
 public:
  Prober(const Scene& scene, const Transmitter& tx, const Trajectory& traj, const SegmentationParams& params,
         const ImageTree& tree)
      : scene_(scene), tx_(tx), traj_(traj), params_(params), tree_(tree) {}

  ProbeState state_at(double t) const {
    const Vec3 pos = sample(traj_, t).position;
    ProbeState s;
    s.link = los_state(scene_, tx_, pos, params_.include_dynamic);
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t n = 0; n < tree_.nodes().size(); ++n) {
      if (!tree_.beam_contains(scene_, n, pos)) continue;
      const auto p = tree_.evaluate(scene_, tx_, n, pos, params_.coefficient_mode, params_.include_dynamic);
      if (!p) continue;
      const auto face = static_cast<std::int64_t>(tree_.nodes()[n].face);
      if (p->power_dbm > best || (p->power_dbm == best && face < s.primary_face)) {
        best = p->power_dbm;
        s.primary_face = face;
      }
    }
    return s;
  }

  std::vector<Signature> anchors_at(double t) const {
    const Vec3 pos = sample(traj_, t).position;
    std::vector<Signature> out;
    if (los_state(scene_, tx_, pos, params_.include_dynamic) == LinkState::LoS) out.emplace_back();
    for (std::uint32_t n = 0; n < tree_.nodes().size(); ++n) {
      if (!tree_.beam_contains(scene_, n, pos)) continue;
      if (tree_.evaluate(scene_, tx_, n, pos, params_.coefficient_mode, params_.include_dynamic)) {
        out.push_back({{InteractionKind::Reflection, tree_.nodes()[n].face}});
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Earliest time in (lo, hi] whose state differs from `from`, to within the tolerance.
  double first_change(double lo, double hi, const ProbeState& from) const {
    while (hi - lo > params_.time_tolerance_s) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (state_at(mid) == from) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return hi;
  }

 private:
  const Scene& scene_;
  const Transmitter& tx_;
  const Trajectory& traj_;
  const SegmentationParams& params_;
  const ImageTree& tree_;
};

}  // namespace

std::vector<TrajectorySegment> segment_trajectory(const Scene& scene, const Transmitter& tx, const Trajectory& traj,
                                                  const SegmentationParams& params, const ImageTree* first_order) {
  if (traj.samples.size() < 2) throw std::invalid_argument("segment_trajectory: need at least two samples");
  if (!(params.max_segment_length_m > 0.0) || params.max_segment_length_m > kMaxSegmentLengthCap) {
    throw std::invalid_argument("segment_trajectory: max_segment_length_m must be in (0, 15]");
  }
  if (!(params.scan_step_s > 0.0)) throw std::invalid_argument("segment_trajectory: scan_step_s must be positive");

  ImageTree own;
  if (first_order == nullptr) {
    own = ImageTree::build_static(scene, tx.position, 1);
    first_order = &own;
  }
  const Prober probe(scene, tx, traj, params, *first_order);

  const double t0 = traj.t_first(), t1 = traj.t_last();
  std::vector<double> scan;
  const auto steps = static_cast<std::size_t>(std::floor((t1 - t0) / params.scan_step_s));
  for (std::size_t k = 0; k <= steps; ++k) scan.push_back(t0 + static_cast<double>(k) * params.scan_step_s);
  for (const auto& s : traj.samples) scan.push_back(s.t_s);
  std::sort(scan.begin(), scan.end());
  scan.erase(std::unique(scan.begin(), scan.end()), scan.end());
  while (!scan.empty() && scan.back() > t1) scan.pop_back();
  if (scan.back() != t1) scan.push_back(t1);

  const double total = arc_length_at(traj, t1);
  std::vector<TrajectorySegment> out;
  double seg_start = t0;
  double arc_start = 0.0;
  ProbeState current = probe.state_at(t0);

  auto close = [&](double t_end) {
    TrajectorySegment seg;
    seg.receiver_id = traj.receiver_id;
    seg.t_start = seg_start;
    seg.t_end = t_end;
    seg.state = current.link;
    seg.anchor_paths = probe.anchors_at(seg_start);
    seg.path_length_m = arc_length_at(traj, t_end) - arc_start;
    out.push_back(std::move(seg));
  };

  for (std::size_t i = 1; i < scan.size(); ++i) {
    double lo = scan[i - 1];
    const double hi = scan[i];
    for (;;) {
      double boundary = hi;
      bool split = false;
      const double arc_limit = arc_start + params.max_segment_length_m;
      if (arc_limit < total - 1e-9) {
        const double t_arc = time_at_arc_length(traj, arc_limit);
        if (t_arc <= hi && t_arc > seg_start) {
          boundary = t_arc;
          split = true;
        }
      }
      const double probe_end = split ? boundary : hi;
      if (probe_end > lo && !(probe.state_at(probe_end) == current)) {
        boundary = probe.first_change(lo, probe_end, current);
        split = true;
      }
      if (!split || boundary >= t1) break;
      close(boundary);
      seg_start = boundary;
      arc_start = arc_length_at(traj, boundary);
      current = probe.state_at(boundary);
      lo = boundary;
    }
  }
  close(t1);
  return out;
}

std::size_t segment_at(const std::vector<TrajectorySegment>& segments, double t) {
  if (segments.empty()) throw std::invalid_argument("segment_at: no segments");
  const auto it = std::upper_bound(segments.begin(), segments.end(), t,
                                   [](double v, const TrajectorySegment& s) { return v < s.t_start; });
  if (it == segments.begin()) return 0;
  return static_cast<std::size_t>(std::distance(segments.begin(), it)) - 1;
}

}  // namespace urbanwave
