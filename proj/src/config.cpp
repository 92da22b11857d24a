#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "urbanwave/config.hpp"
#include "urbanwave/errors.hpp"

namespace urbanwave {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw InputError("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw InputError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InputError("expected a boolean, got '" + s + "'");
}

Vec3 to_vec3(const std::string& s) {
  const auto f = split(s);
  if (f.size() != 3) throw InputError("expected x,y,z, got '" + s + "'");
  return {to_double(f[0]), to_double(f[1]), to_double(f[2])};
}

using Setter = std::function<void(SimulationConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"frequency_hz", [](auto& c, auto& v) { c.frequency_hz = to_double(v); }},
      {"tx_power_dbm", [](auto& c, auto& v) { c.tx_power_dbm = to_double(v); }},
      {"tx_position", [](auto& c, auto& v) { c.tx_position = to_vec3(v); }},
      {"max_reflection_order", [](auto& c, auto& v) { c.max_reflection_order = static_cast<int>(to_uint(v)); }},
      {"diffraction_enabled", [](auto& c, auto& v) { c.diffraction_enabled = to_bool(v); }},
      {"timestep_s", [](auto& c, auto& v) { c.timestep_s = to_double(v); }},
      {"max_segment_length_m", [](auto& c, auto& v) { c.max_segment_length_m = to_double(v); }},
      {"r_threshold", [](auto& c, auto& v) { c.r_threshold = to_double(v); }},
      {"theta_floor_rad", [](auto& c, auto& v) { c.theta_floor_rad = to_double(v); }},
      {"fallback_coherence_s", [](auto& c, auto& v) { c.fallback_coherence_s = to_double(v); }},
      {"combining",
       [](auto& c, auto& v) {
         if (v == "NonCoherent" || v == "noncoherent") {
           c.combining = Combining::NonCoherent;
         } else if (v == "Coherent" || v == "coherent") {
           c.combining = Combining::Coherent;
         } else {
           throw InputError("combining must be NonCoherent or Coherent");
         }
       }},
      {"correlation_variant",
       [](auto& c, auto& v) {
         if (v == "Standard" || v == "standard") {
           c.correlation_variant = CorrelationVariant::Standard;
         } else if (v == "AsPrinted" || v == "asprinted") {
           c.correlation_variant = CorrelationVariant::AsPrinted;
         } else {
           throw InputError("correlation_variant must be Standard or AsPrinted");
         }
       }},
      {"reflection_coefficient_mode",
       [](auto& c, auto& v) {
         if (v == "amplitude") {
           c.reflection_coefficient_mode = CoefficientMode::Amplitude;
         } else if (v == "power") {
           c.reflection_coefficient_mode = CoefficientMode::Power;
         } else {
           throw InputError("reflection_coefficient_mode must be amplitude or power");
         }
       }},
      {"cache_enabled", [](auto& c, auto& v) { c.cache_enabled = to_bool(v); }},
      {"rx_height_m", [](auto& c, auto& v) { c.rx_height_m = to_double(v); }},
      {"worker_count", [](auto& c, auto& v) { c.worker_count = static_cast<unsigned>(to_uint(v)); }},
      {"seed", [](auto& c, auto& v) { c.seed = to_uint(v); }},
      {"obstacles", [](auto& c, auto& v) { c.obstacles = v; }},
      {"bench_widths",
       [](auto& c, auto& v) {
         c.bench_widths.clear();
         for (const auto& f : split(v)) c.bench_widths.push_back(to_double(f));
       }},
      {"bench_object_counts",
       [](auto& c, auto& v) {
         c.bench_object_counts.clear();
         for (const auto& f : split(v)) c.bench_object_counts.push_back(to_uint(f));
       }},
      {"bench_receivers", [](auto& c, auto& v) { c.bench_receivers = to_uint(v); }},
      {"bench_region_m", [](auto& c, auto& v) { c.bench_region_m = to_double(v); }},
      {"bench_placements", [](auto& c, auto& v) { c.bench_placements = static_cast<int>(to_uint(v)); }},
      {"bench_steps", [](auto& c, auto& v) { c.bench_steps = static_cast<int>(to_uint(v)); }},
      {"bench_speed_mps", [](auto& c, auto& v) { c.bench_speed_mps = to_double(v); }},
      {"bench_route_length_m", [](auto& c, auto& v) { c.bench_route_length_m = to_double(v); }},
      {"static_runs", [](auto& c, auto& v) { c.static_runs = static_cast<int>(to_uint(v)); }},
      {"bench_obstacles", [](auto& c, auto& v) { c.bench_obstacles = to_uint(v); }},
  };
  return table;
}

void check(const SimulationConfig& c) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw InputError(msg);
  };
  require(c.frequency_hz > 0.0, "frequency_hz must be positive");
  require(c.max_reflection_order >= 1 && c.max_reflection_order <= 3, "max_reflection_order must be in 1..3");
  require(c.timestep_s > 0.0, "timestep_s must be positive");
  require(c.max_segment_length_m > 0.0 && c.max_segment_length_m <= 15.0, "max_segment_length_m must be in (0, 15]");
  require(c.r_threshold > 0.0 && c.r_threshold < 1.0, "r_threshold must be in (0, 1)");
  require(c.theta_floor_rad > 0.0, "theta_floor_rad must be positive");
  require(c.fallback_coherence_s > 0.0, "fallback_coherence_s must be positive");
  require(c.rx_height_m >= 0.0, "rx_height_m must be non-negative");
  require(c.worker_count >= 1, "worker_count must be at least 1");
  require(!c.bench_widths.empty(), "bench_widths is empty");
  for (double w : c.bench_widths) require(w > 0.0, "bench_widths must be positive");
  require(!c.bench_object_counts.empty(), "bench_object_counts is empty");
  require(c.bench_placements >= 1 && c.bench_steps >= 1 && c.static_runs >= 1, "bench counts must be positive");
  require(c.bench_speed_mps > 0.0 && c.bench_route_length_m > 0.0 && c.bench_region_m > 0.0,
          "bench lengths and speeds must be positive");
}

}  // namespace

TraceConfig SimulationConfig::trace_config() const {
  return {max_reflection_order, diffraction_enabled, combining, reflection_coefficient_mode};
}

TracerConfig SimulationConfig::tracer_config() const {
  TracerConfig t;
  t.trace = trace_config();
  t.cache_enabled = cache_enabled;
  t.coherence = {r_threshold, theta_floor_rad, fallback_coherence_s};
  return t;
}

SimulationConfig parse_config(const std::string& text, const std::string& base_dir) {
  SimulationConfig c;
  std::stringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(n);
    if (eq == std::string::npos) throw InputError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw InputError(where + ": unknown key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const InputError& e) {
      throw InputError(where + ": " + key + ": " + e.what());
    }
  }
  check(c);
  if (!c.obstacles.empty() && !base_dir.empty() && std::filesystem::path(c.obstacles).is_relative()) {
    c.obstacles = (std::filesystem::path(base_dir) / c.obstacles).string();
  }
  return c;
}

SimulationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  SimulationConfig c = parse_config(ss.str(), std::filesystem::path(path).parent_path().string());
  if (const char* env = std::getenv("URBANWAVE_WORKERS"); env != nullptr && *env != '\0') {
    try {
      c.worker_count = static_cast<unsigned>(to_uint(env));
    } catch (const InputError&) {
      throw InputError("URBANWAVE_WORKERS must be a positive integer");
    }
    if (c.worker_count == 0) throw InputError("URBANWAVE_WORKERS must be a positive integer");
  }
  return c;
}

}  // namespace urbanwave
