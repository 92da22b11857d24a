#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "urbanwave/geometry.hpp"

namespace urbanwave {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

struct Transmitter {
  Vec3 position;
  double power_dbm = 50.0;
  double frequency_hz = 3e9;

  double wavelength() const { return kSpeedOfLight / frequency_hz; }
};

enum class InteractionKind : std::uint8_t { Reflection, Diffraction };

struct Interaction {
  InteractionKind kind = InteractionKind::Reflection;
  std::uint32_t id = 0;  // face id for reflections, edge id for diffractions
  Vec3 point;
};

/// Ordered (kind, surface or edge id) list; empty for line of sight.
using Signature = std::vector<std::pair<InteractionKind, std::uint32_t>>;

struct PropagationPath {
  std::vector<Interaction> interactions;
  double length_m = 0.0;
  double delay_s = 0.0;
  double power_dbm = 0.0;
  double phase_rad = 0.0;
  Vec3 arrival_dir;    // propagation direction at the receiver
  Vec3 departure_dir;  // propagation direction at the transmitter
  double doppler_hz = 0.0;

  Signature signature() const;
  bool is_los() const { return interactions.empty(); }
};

struct ChannelSnapshot {
  double time_s = 0.0;
  std::vector<PropagationPath> paths;
  std::optional<double> total_power_dbm;
  bool los = false;
};

enum class Combining { NonCoherent, Coherent };

/// How material reflection coefficients enter the per-bounce loss.
enum class CoefficientMode { Amplitude, Power };

struct TraceConfig {
  int max_order = 2;
  bool diffraction_enabled = true;
  Combining combining = Combining::NonCoherent;
  CoefficientMode coefficient_mode = CoefficientMode::Amplitude;
};

/// Friis free-space loss 20 log10(4 pi d f / c). Throws std::invalid_argument when d <= 0 or f <= 0.
double free_space_loss_db(double d_m, double f_hz);

/// Single knife-edge loss: 6.9 + 20 log10(sqrt((v - 0.1)^2 + 1) + v - 0.1) for v > -0.7, else 0.
double knife_edge_loss_db(double nu);

/// Fresnel-Kirchhoff parameter for an obstruction of height h between legs d1 and d2.
double fresnel_parameter(double h_m, double d1_m, double d2_m, double wavelength_m);

/// Per-bounce gain in dB for a reflection coefficient.
double reflection_gain_db(double coefficient, CoefficientMode mode);

/// Combines per-path powers. Throws std::invalid_argument("no paths") on an empty list.
double aggregate_power_dbm(std::span<const PropagationPath> paths, Combining mode = Combining::NonCoherent);

/// Power-weighted RMS delay spread (0 for a single path, NaN for none).
double rms_delay_spread_s(std::span<const PropagationPath> paths);

/// Fills length, delay, phase, directions and power from the vertex chain tx, interactions..., rx.
PropagationPath make_path(const Transmitter& tx, const Vec3& rx, std::vector<Interaction> interactions,
                          double gain_db);

std::optional<PropagationPath> trace_los(const Scene& scene, const Transmitter& tx, const Vec3& rx);

/// Image-method specular paths up to max_order bounces.
std::vector<PropagationPath> find_reflection_paths(const Scene& scene, const Transmitter& tx, const Vec3& rx,
                                                   int max_order,
                                                   CoefficientMode mode = CoefficientMode::Amplitude);

/// First-order knife-edge paths around silhouette edges of the objects blocking the direct path.
std::vector<PropagationPath> find_diffraction_paths(const Scene& scene, const Transmitter& tx, const Vec3& rx);

/// Sorts paths by interaction count, then signature.
void canonicalize(std::vector<PropagationPath>& paths);

/// Builds the snapshot from a path list (canonical order, aggregate power, LoS flag).
ChannelSnapshot make_snapshot(double time_s, std::vector<PropagationPath> paths, Combining mode);

/// Full, uncached evaluation of one receiver position.
ChannelSnapshot trace_channel(const Scene& scene, const Transmitter& tx, const Vec3& rx, const TraceConfig& config);

}  // namespace urbanwave
