#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "urbanwave/geometry.hpp"
#include "urbanwave/trajectory.hpp"

namespace urbanwave {

/// Materials by name, in file order, plus the mapping from OBJ group names to materials.
struct MaterialTable {
  std::vector<Material> materials;
  std::vector<std::pair<std::string, std::string>> groups;  // group -> material name

  /// Index of the named material, or nothing.
  std::optional<std::uint32_t> find(const std::string& name) const;
};

/// Wall (0.8) and Metal (0.9, 10 mm, 10 dB).
MaterialTable default_material_table();

/// Sidecar format, one record per line, '#' comments:
///   material,<name>,<reflection coefficient>[,<thickness mm>[,<penetration loss dB>]]
///   group,<obj group>,<material name>
/// Missing Wall/Metal entries are appended with their defaults. Throws InputError with the line
/// number on malformed records, duplicates or unknown material names.
MaterialTable load_material_table(const std::string& path);
void write_material_table(const MaterialTable& table, const std::string& path);

/// OBJ triangle soup; every `o` or `g` line starts a new static object whose material is chosen
/// by the sidecar group table, then by a material of the same name, and otherwise Wall (with a
/// warning appended to `warnings`). Throws InputError("empty scene") when nothing is loaded.
Scene load_scene(const std::string& obj_path, const std::string& materials_path,
                 std::vector<std::string>* warnings = nullptr);

/// Writes objects (world coordinates at their current pose) as OBJ groups plus a sidecar table
/// so that load_scene reproduces triangle count and material ids.
void write_scene(const std::vector<SceneObject>& objects, const std::vector<Material>& materials,
                 const std::string& obj_path, const std::string& materials_path);

/// SUMO floating-car data: one trajectory per vehicle id in order of first appearance,
/// positions at height rx_height_m, heading from the clockwise-from-north angle.
std::vector<Trajectory> load_sumo_fcd(const std::string& xml_path, double rx_height_m = 1.5);

/// CSV with a header naming at least rx_id,t,x,y,z (speed,hx,hy,hz optional, other columns ignored).
std::vector<Trajectory> load_csv_trajectories(const std::string& csv_path);

/// Writes rx_id,t,x,y,z,speed,hx,hy,hz with round-trip precision.
void write_csv_trajectories(const std::vector<Trajectory>& trajectories, const std::string& csv_path);

/// Picks the loader from the extension (.xml for FCD, anything else CSV).
std::vector<Trajectory> load_trajectories(const std::string& path, double rx_height_m = 1.5);

struct PowerTraceRow {
  double t_s = 0.0;
  std::string rx_id;
  Vec3 position;
  std::optional<double> power_dbm;  // absent when no path exists
  std::uint32_t n_paths = 0;
  bool los = false;
  double delay_spread_s = 0.0;
  double doppler_mean_hz = 0.0;
  double doppler_spread_hz = 0.0;
  std::uint32_t segment = 0;
  std::uint64_t cache_hits = 0;
};

inline constexpr const char* kPowerTraceHeader =
    "t,rx_id,x,y,z,power_dbm,n_paths,los,delay_spread_s,doppler_mean_hz,doppler_spread_hz,segment,cache_hits";

/// Six significant digits, trailing zeros kept; "-inf", "inf" and "nan" spelled out.
std::string format_number(double v);

void write_power_trace(const std::vector<PowerTraceRow>& rows, const std::string& csv_path);

struct HeatmapGrid {
  Vec3 origin;  // center of cell (0, 0) at z = 0
  double cell_m = 1.0;
  std::uint32_t nx = 0, ny = 0;
  double rx_height_m = 1.5;
  std::vector<double> values;  // row-major, row 0 = minimum y; -inf where no path exists

  double& at(std::uint32_t ix, std::uint32_t iy) { return values[std::size_t{iy} * nx + ix]; }
  double at(std::uint32_t ix, std::uint32_t iy) const { return values[std::size_t{iy} * nx + ix]; }
};

void write_heatmap(const HeatmapGrid& grid, const std::string& csv_path);
HeatmapGrid read_heatmap(const std::string& csv_path);

}  // namespace urbanwave
