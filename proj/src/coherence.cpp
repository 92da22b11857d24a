#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "urbanwave/coherence.hpp"
#include "urbanwave/doppler.hpp"

namespace urbanwave {

namespace {

void check_uniform(const std::vector<double>& t) {
  if (t.size() < 3) return;
  const double dt = t[1] - t[0];
  for (std::size_t i = 2; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
      throw std::invalid_argument("correlation: samples are not uniformly spaced");
    }
  }
}

}  // namespace

double correlation(const GainSeries& series, int lag_steps, CorrelationVariant variant) {
  const auto& g = series.g;
  if (series.t.size() != g.size()) throw std::invalid_argument("correlation: t and g differ in length");
  if (lag_steps < 0) throw std::invalid_argument("correlation: negative lag");
  if (g.size() <= static_cast<std::size_t>(lag_steps)) throw std::invalid_argument("correlation: length <= lag");
  check_uniform(series.t);

  const auto n = g.size();
  const auto lag = static_cast<std::size_t>(lag_steps);
  double sum = 0.0, sum_sq = 0.0, sum_lag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += g[i];
    sum_sq += g[i] * g[i];
  }
  for (std::size_t i = 0; i + lag < n; ++i) sum_lag += g[i] * g[i + lag];
  const double mean = sum / static_cast<double>(n);
  const double mean_sq = sum_sq / static_cast<double>(n);
  const double mean_lag = sum_lag / static_cast<double>(n - lag);
  const double numerator = mean_lag - mean * mean;

  if (variant == CorrelationVariant::AsPrinted) {
    const double denom = mean_sq * mean * mean;
    if (denom == 0.0) throw std::invalid_argument("zero variance");
    return numerator / denom;
  }
  const double var = mean_sq - mean * mean;
  if (!(var > 1e-12 * mean_sq)) throw std::invalid_argument("zero variance");
  return numerator / var;
}

CorrelationResult correlation_function(const GainSeries& series, int max_lag_steps, CorrelationVariant variant) {
  CorrelationResult out;
  const double dt = series.t.size() > 1 ? series.t[1] - series.t[0] : 0.0;
  for (int k = 0; k <= max_lag_steps; ++k) {
    out.lags_s.push_back(k * dt);
    out.r.push_back(correlation(series, k, variant));
  }
  return out;
}

double coherence_time(double r_threshold, double f_d_max_hz, double theta_rad) {
  if (!(r_threshold > 0.0) || !(r_threshold < 1.0)) {
    throw std::invalid_argument("coherence_time: threshold must be in (0, 1)");
  }
  if (!(f_d_max_hz > 0.0)) throw std::invalid_argument("coherence_time: Doppler frequency must be positive");
  if (!(theta_rad > 0.0)) throw std::invalid_argument("degenerate angle");
  const double r4 = r_threshold * r_threshold * r_threshold * r_threshold;
  return std::sqrt(1.0 / r4 - 1.0) / (2.0 * std::numbers::pi * f_d_max_hz * theta_rad * theta_rad);
}

double receiver_coherence_time(const CoherenceParams& params, double f_c_hz, const Vec3& velocity, const Vec3& tx,
                               const Vec3& rx) {
  const double v = norm(velocity);
  const Vec3 d = rx - tx;
  if (v == 0.0 || norm(d) == 0.0) return params.fallback_s;
  double theta = angle_between(velocity, d);
  if (theta > 0.5 * std::numbers::pi) theta = std::numbers::pi - theta;
  if (theta < params.theta_floor_rad) return params.fallback_s;
  return coherence_time(params.r_threshold, doppler_shift(f_c_hz, v, 0.0), theta);
}

std::size_t CacheKeyHash::operator()(const CacheKey& k) const {
  std::size_t h = std::hash<std::string>{}(k.rx_id) ^ (std::size_t{k.tx_id} * 0x9e3779b97f4a7c15ull);
  for (const auto& [kind, id] : k.signature) {
    const std::size_t v = (std::size_t{id} << 1) | static_cast<std::size_t>(kind);
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

PathCache::PathCache() : shards_(std::make_unique<Shard[]>(kShards)) {}

PathCache::Shard& PathCache::shard_of(const std::string& rx_id) const {
  return shards_[std::hash<std::string>{}(rx_id) % kShards];
}

std::optional<PropagationPath> PathCache::get(const CacheKey& key, double now_s) {
  Shard& s = shard_of(key.rx_id);
  std::lock_guard lock(s.mutex);
  const auto it = s.entries.find(key);
  if (it == s.entries.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  if (!(it->second.expires_t > now_s)) {
    s.entries.erase(it);
    evictions_.fetch_add(1, std::memory_order_relaxed);
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return it->second.path;
}

void PathCache::put(const CacheKey& key, const PropagationPath& path, double now_s, double coherence_time_s) {
  if (!(coherence_time_s > 0.0)) throw std::invalid_argument("cache_put: coherence time must be positive");
  Shard& s = shard_of(key.rx_id);
  std::lock_guard lock(s.mutex);
  s.entries[key] = CacheEntry{path, now_s, now_s + coherence_time_s, now_s};
}

bool PathCache::refresh(const CacheKey& key, const PropagationPath& path, double now_s) {
  Shard& s = shard_of(key.rx_id);
  std::lock_guard lock(s.mutex);
  const auto it = s.entries.find(key);
  if (it == s.entries.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return false;
  }
  if (!(it->second.expires_t > now_s)) {
    s.entries.erase(it);
    evictions_.fetch_add(1, std::memory_order_relaxed);
    misses_.fetch_add(1, std::memory_order_relaxed);
    return false;
  }
  it->second.path = path;
  it->second.last_validated_t = now_s;
  hits_.fetch_add(1, std::memory_order_relaxed);
  return true;
}

bool PathCache::evict(const CacheKey& key) {
  Shard& s = shard_of(key.rx_id);
  std::lock_guard lock(s.mutex);
  if (s.entries.erase(key) == 0) return false;
  evictions_.fetch_add(1, std::memory_order_relaxed);
  return true;
}

std::optional<CacheEntry> PathCache::entry(const CacheKey& key) const {
  Shard& s = shard_of(key.rx_id);
  std::lock_guard lock(s.mutex);
  const auto it = s.entries.find(key);
  if (it == s.entries.end()) return std::nullopt;
  return it->second;
}

void PathCache::retain(std::uint32_t tx_id, const std::string& rx_id, const std::vector<Signature>& keep) {
  Shard& s = shard_of(rx_id);
  std::lock_guard lock(s.mutex);
  for (auto it = s.entries.begin(); it != s.entries.end();) {
    const CacheKey& k = it->first;
    if (k.tx_id == tx_id && k.rx_id == rx_id && !std::binary_search(keep.begin(), keep.end(), k.signature)) {
      it = s.entries.erase(it);
      evictions_.fetch_add(1, std::memory_order_relaxed);
    } else {
      ++it;
    }
  }
}

std::size_t PathCache::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kShards; ++i) {
    std::lock_guard lock(shards_[i].mutex);
    n += shards_[i].entries.size();
  }
  return n;
}

CacheStats PathCache::stats() const {
  return {hits_.load(std::memory_order_relaxed), misses_.load(std::memory_order_relaxed),
          evictions_.load(std::memory_order_relaxed), discoveries_.load(std::memory_order_relaxed)};
}

CoherentTracer::CoherentTracer(const Scene& scene, const Transmitter& tx, TracerConfig config)
    : tx_(tx), config_(std::move(config)) {
  tree_ = ImageTree::build_static(scene, tx.position, config_.trace.max_order);
  world_ = scene.static_bounds();
  world_.expand(tx.position);
  world_ = world_.padded(1.0);

  std::vector<Aabb> boxes;
  for (std::uint32_t n = 0; n < tree_.static_count(); ++n) {
    const Aabb box = tree_.reach(scene, n, world_);
    if (!box.valid()) continue;
    boxes.push_back(box);
    indexed_nodes_.push_back(n);
    frusta_start_.push_back(static_cast<std::uint32_t>(frusta_.size()));
    const auto f = tree_.beam_frusta(scene, n);
    frusta_.insert(frusta_.end(), f.begin(), f.end());
  }
  frusta_start_.push_back(static_cast<std::uint32_t>(frusta_.size()));
  if (!boxes.empty()) beam_index_ = AabbTree::build(boxes, 4);
}

void CoherentTracer::begin_step(const Scene& scene) { tree_.extend_dynamic(scene); }

CoherentTracer::ReceiverState& CoherentTracer::state_of(const std::string& rx_id) {
  std::lock_guard lock(states_mutex_);
  auto& slot = states_[rx_id];
  if (!slot) slot = std::make_unique<ReceiverState>();
  return *slot;
}

std::uint64_t CoherentTracer::last_hits(const std::string& rx_id) const {
  std::lock_guard lock(states_mutex_);
  const auto it = states_.find(rx_id);
  return it == states_.end() ? 0 : it->second->last_hits;
}

std::vector<std::uint32_t> CoherentTracer::query_beams(const Aabb& box) const {
  std::vector<std::uint32_t> out;
  const Aabb query = box.padded(1e-6);
  beam_index_.traverse([&](const Aabb& b) { return b.overlaps(query); },
                       [&](std::uint32_t slot) {
                         const std::uint32_t prim = beam_index_.order()[slot];
                         const std::span<const ImageTree::Frustum> f(frusta_.data() + frusta_start_[prim],
                                                                     frusta_start_[prim + 1] - frusta_start_[prim]);
                         if (ImageTree::frusta_may_touch(f, query)) out.push_back(indexed_nodes_[prim]);
                       });
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<std::uint32_t>& CoherentTracer::cell_candidates(const std::array<std::int64_t, 3>& cell) const {
  {
    std::shared_lock lock(cells_mutex_);
    if (const auto it = cells_.find(cell); it != cells_.end()) return *it->second;
  }
  const double e = config_.discovery_cell_m;
  const Aabb box{{cell[0] * e, cell[1] * e, cell[2] * e}, {(cell[0] + 1) * e, (cell[1] + 1) * e, (cell[2] + 1) * e}};
  auto list = std::make_unique<std::vector<std::uint32_t>>(query_beams(box));
  std::unique_lock lock(cells_mutex_);
  // another thread may have won; either list is the same
  auto [it, inserted] = cells_.try_emplace(cell, std::move(list));
  return *it->second;
}

// Candidates for a segment: the union of the shared lists of the grid cells the box touches.
// Cells only enlarge the query, so the result is a superset of query_beams(box).
std::vector<std::uint32_t> CoherentTracer::discover(const Aabb& box) const {
  std::vector<std::uint32_t> out;
  if (!box.valid() || !world_.contains(box.min) || !world_.contains(box.max)) {
    out.resize(tree_.static_count());
    for (std::uint32_t n = 0; n < out.size(); ++n) out[n] = n;
    return out;
  }
  const double e = config_.discovery_cell_m;
  const Aabb q = box.padded(1e-6);
  std::array<std::int64_t, 3> lo{}, hi{};
  auto cell_of = [e](double v) { return static_cast<std::int64_t>(std::floor(v / e)); };
  lo = {cell_of(q.min.x), cell_of(q.min.y), cell_of(q.min.z)};
  hi = {cell_of(q.max.x), cell_of(q.max.y), cell_of(q.max.z)};
  const std::int64_t cells = (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1);
  if (cells > 27) return query_beams(box);
  for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
    for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
      for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
        const auto& list = cell_candidates({x, y, z});
        out.insert(out.end(), list.begin(), list.end());
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ChannelSnapshot CoherentTracer::trace(const Scene& scene, const std::string& rx_id, const KinematicState& rx,
                                      std::size_t segment_index, const Aabb& segment_box) {
  ReceiverState& st = state_of(rx_id);
  const Vec3& pos = rx.position;
  std::vector<PropagationPath> paths;
  auto los = trace_los(scene, tx_, pos);
  if (los) paths.push_back(std::move(*los));

  auto try_node = [&](std::uint32_t n) {
    if (!tree_.beam_contains(scene, n, pos)) return;
    if (auto p = tree_.evaluate(scene, tx_, n, pos, config_.trace.coefficient_mode)) paths.push_back(std::move(*p));
  };
  const auto total = static_cast<std::uint32_t>(tree_.nodes().size());
  if (config_.cache_enabled) {
    if (st.segment != segment_index) {
      st.candidates = discover(segment_box);
      st.segment = segment_index;
      cache_.count_discovery();
    }
    for (std::uint32_t n : st.candidates) try_node(n);
    for (auto n = static_cast<std::uint32_t>(tree_.static_count()); n < total; ++n) try_node(n);
  } else {
    for (std::uint32_t n = 0; n < total; ++n) try_node(n);
  }
  if (config_.trace.diffraction_enabled && !los) {
    auto diff = find_diffraction_paths(scene, tx_, pos);
    paths.insert(paths.end(), std::make_move_iterator(diff.begin()), std::make_move_iterator(diff.end()));
  }
  ChannelSnapshot snap = make_snapshot(scene.time(), std::move(paths), config_.trace.combining);

  if (config_.cache_enabled) {
    const double now = scene.time();
    std::uint64_t hits = 0;
    std::vector<Signature> present;
    present.reserve(snap.paths.size());
    for (const auto& p : snap.paths) {
      CacheKey key{config_.tx_id, rx_id, p.signature()};
      if (cache_.refresh(key, p, now)) {
        ++hits;
      } else {
        cache_.put(key, p, now,
                   receiver_coherence_time(config_.coherence, tx_.frequency_hz, rx.velocity, tx_.position, pos));
      }
      present.push_back(std::move(key.signature));
    }
    std::sort(present.begin(), present.end());
    cache_.retain(config_.tx_id, rx_id, present);
    st.last_hits = hits;
  }
  return snap;
}

}  // namespace urbanwave
