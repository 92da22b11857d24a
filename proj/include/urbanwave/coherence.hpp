#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "urbanwave/dynamics.hpp"
#include "urbanwave/image_tree.hpp"
#include "urbanwave/propagation.hpp"

namespace urbanwave {

struct GainSeries {
  std::vector<double> t;  // s, uniformly spaced
  std::vector<double> g;  // |h(t)|, linear amplitude
};

enum class CorrelationVariant { Standard, AsPrinted };

/// Lagged correlation of g. Means of g and g^2 use the whole series; the lagged product
/// averages the overlapping pairs. Throws std::invalid_argument("zero variance") for a
/// constant series in the Standard variant, and for lag >= length or non-uniform spacing.
double correlation(const GainSeries& series, int lag_steps, CorrelationVariant variant = CorrelationVariant::Standard);

struct CorrelationResult {
  std::vector<double> lags_s;
  std::vector<double> r;
};

CorrelationResult correlation_function(const GainSeries& series, int max_lag_steps,
                                       CorrelationVariant variant = CorrelationVariant::Standard);

/// sqrt(1/R^4 - 1) / (2 pi f_D theta^2). Throws std::invalid_argument("degenerate angle") for
/// theta <= 0, and for R outside (0, 1) or f_D <= 0.
double coherence_time(double r_threshold, double f_d_max_hz, double theta_rad);

struct CoherenceParams {
  double r_threshold = 0.9;
  double theta_floor_rad = 0.05;
  double fallback_s = 0.5;
};

/// Coherence time for a receiver moving with `velocity` at `rx`. The angle to the TX->RX direction is
/// folded into [0, pi/2]; below the floor (or at rest) the fallback is returned.
double receiver_coherence_time(const CoherenceParams& params, double f_c_hz, const Vec3& velocity, const Vec3& tx,
                               const Vec3& rx);

struct CacheKey {
  std::uint32_t tx_id = 0;
  std::string rx_id;
  Signature signature;

  bool operator==(const CacheKey&) const = default;
};

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& k) const;
};

struct CacheEntry {
  PropagationPath path;
  double created_t = 0.0;
  double expires_t = 0.0;
  double last_validated_t = 0.0;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t discoveries = 0;  // full candidate searches
};

/// Expiring path store, sharded by receiver id so that concurrent workers serving different
/// receivers rarely contend.
class PathCache {
 public:
  PathCache();

  /// The stored path if its entry has expires_t > now; expired entries are evicted.
  std::optional<PropagationPath> get(const CacheKey& key, double now_s);
  /// Throws std::invalid_argument for a non-positive coherence time.
  void put(const CacheKey& key, const PropagationPath& path, double now_s, double coherence_time_s);
  /// Marks a live entry as revalidated at now_s and replaces its path. False when absent or expired.
  bool refresh(const CacheKey& key, const PropagationPath& path, double now_s);
  bool evict(const CacheKey& key);
  std::optional<CacheEntry> entry(const CacheKey& key) const;
  /// Drops every entry of rx_id whose signature is not in `keep` (sorted).
  void retain(std::uint32_t tx_id, const std::string& rx_id, const std::vector<Signature>& keep);

  std::size_t size() const;
  CacheStats stats() const;
  void count_discovery() { discoveries_.fetch_add(1, std::memory_order_relaxed); }

 private:
  static constexpr std::size_t kShards = 64;
  struct Shard {
    mutable std::mutex mutex;
    std::unordered_map<CacheKey, CacheEntry, CacheKeyHash> entries;
  };
  Shard& shard_of(const std::string& rx_id) const;

  std::unique_ptr<Shard[]> shards_;
  std::atomic<std::uint64_t> hits_{0}, misses_{0}, evictions_{0}, discoveries_{0};
};

struct TracerConfig {
  TraceConfig trace;
  bool cache_enabled = true;
  CoherenceParams coherence;
  std::uint32_t tx_id = 0;
  /// Edge of the cubic cells whose candidate lists are shared between receivers.
  double discovery_cell_m = 10.0;
};

/// Receiver-side tracing that reuses segment-level path discovery and caches validated paths
/// within their coherence time. Every path is still validated geometrically at every query, so
/// results equal trace_channel exactly.
class CoherentTracer {
 public:
  /// Builds the static image tree of tx over the scene's static geometry.
  CoherentTracer(const Scene& scene, const Transmitter& tx, TracerConfig config);

  /// Rebuilds the moving-face part of the tree for the scene's current poses. Call once per
  /// timestep, before any trace() of that step.
  void begin_step(const Scene& scene);

  /// Snapshot for one receiver. `segment_box` bounds the receiver's current segment and
  /// `segment_index` identifies it; a new index triggers a new discovery. Thread-safe for
  /// distinct rx_id values.
  ChannelSnapshot trace(const Scene& scene, const std::string& rx_id, const KinematicState& rx,
                        std::size_t segment_index, const Aabb& segment_box);

  const ImageTree& tree() const { return tree_; }
  const PathCache& cache() const { return cache_; }
  CacheStats stats() const { return cache_.stats(); }
  const TracerConfig& config() const { return config_; }
  /// Hits recorded by the most recent trace() of rx_id.
  std::uint64_t last_hits(const std::string& rx_id) const;

 private:
  struct ReceiverState {
    std::size_t segment = static_cast<std::size_t>(-1);
    std::vector<std::uint32_t> candidates;
    std::uint64_t last_hits = 0;
  };
  ReceiverState& state_of(const std::string& rx_id);
  std::vector<std::uint32_t> discover(const Aabb& box) const;
  std::vector<std::uint32_t> query_beams(const Aabb& box) const;
  const std::vector<std::uint32_t>& cell_candidates(const std::array<std::int64_t, 3>& cell) const;

  struct CellHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& c) const {
      return std::hash<std::int64_t>{}((c[0] * 73856093) ^ (c[1] * 19349663) ^ (c[2] * 83492791));
    }
  };

  Transmitter tx_;
  TracerConfig config_;
  ImageTree tree_;
  Aabb world_;
  AabbTree beam_index_;
  std::vector<std::uint32_t> indexed_nodes_;  // beam_index_ primitive -> node
  std::vector<ImageTree::Frustum> frusta_;     // beams of indexed nodes, back to back
  std::vector<std::uint32_t> frusta_start_;    // per primitive, plus an end marker
  mutable std::shared_mutex cells_mutex_;
  mutable std::unordered_map<std::array<std::int64_t, 3>, std::unique_ptr<std::vector<std::uint32_t>>, CellHash>
      cells_;
  PathCache cache_;
  mutable std::mutex states_mutex_;
  std::unordered_map<std::string, std::unique_ptr<ReceiverState>> states_;
};

}  // namespace urbanwave
