#pragma once

#include <string>
#include <vector>

#include "urbanwave/image_tree.hpp"
#include "urbanwave/propagation.hpp"
#include "urbanwave/trajectory.hpp"

namespace urbanwave {

enum class LinkState { LoS, NLoS };

/// LoS iff the direct segment is unobstructed.
LinkState los_state(const Scene& scene, const Transmitter& tx, const Vec3& pos, bool include_dynamic = true);

inline constexpr double kMaxSegmentLengthCap = 15.0;  // m

struct SegmentationParams {
  double max_segment_length_m = 10.0;
  double scan_step_s = 0.1;
  double time_tolerance_s = 1e-6;  // boundary localization
  bool include_dynamic = false;    // segments follow the static city by default
  CoefficientMode coefficient_mode = CoefficientMode::Amplitude;
};

struct TrajectorySegment {
  std::string receiver_id;
  double t_start = 0.0;
  double t_end = 0.0;
  LinkState state = LinkState::LoS;
  std::vector<Signature> anchor_paths;  // LoS and first-order reflections valid at t_start
  double path_length_m = 0.0;
};

/// Splits a trajectory where its arc length exceeds the limit, where LoS flips, or where the
/// strongest first-order reflection changes face. `first_order` may supply a prebuilt order-1
/// static tree for tx. Throws std::invalid_argument for fewer than two samples or a length
/// limit outside (0, 15] m.
std::vector<TrajectorySegment> segment_trajectory(const Scene& scene, const Transmitter& tx, const Trajectory& traj,
                                                  const SegmentationParams& params = {},
                                                  const ImageTree* first_order = nullptr);

/// Index of the segment containing t (the later one at a shared boundary), clamped to the ends.
std::size_t segment_at(const std::vector<TrajectorySegment>& segments, double t);

}  // namespace urbanwave
