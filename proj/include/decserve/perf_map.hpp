// Copyright 2026 The decserve Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DECSERVE_PERF_MAP_HPP_
#define DECSERVE_PERF_MAP_HPP_

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "decserve/chain.hpp"
#include "decserve/latency_model.hpp"
#include "decserve/topology.hpp"

namespace decserve {

// tau(gpu, layer), rho(gpu, peer) or the attribute record of one GPU.
struct PerfKey {
  enum class Kind { kLayerLatency, kLinkRtt, kNodeAttr };

  Kind kind = Kind::kNodeAttr;
  GpuId gpu;
  GpuId peer;
  int layer = 0;

  static PerfKey layer_latency(GpuId gpu, int layer) {
    return {Kind::kLayerLatency, std::move(gpu), {}, layer};
  }
  static PerfKey link_rtt(GpuId from, GpuId to) {
    return {Kind::kLinkRtt, std::move(from), std::move(to), 0};
  }
  static PerfKey node_attr(GpuId gpu) {
    return {Kind::kNodeAttr, std::move(gpu), {}, 0};
  }

  // "tau/<gpu>/<layer>", "rho/<from>/<to>" or "attr/<gpu>".
  std::string to_string() const;
  // Throws InputError on malformed text.
  static PerfKey parse(std::string_view text);

  friend auto operator<=>(const PerfKey&, const PerfKey&) = default;
};

struct PerfEntry {
  double value = 0.0;
  double published_at = 0.0;
  double ttl = 0.0;

  bool expired(double now) const { return now - published_at > ttl; }
};

struct PerfMapConfig {
  double publish_interval_s = 1.5;
  double ttl_multiplier = 3.0;
  LatencyModel latency;

  double ttl() const { return publish_interval_s * ttl_multiplier; }
};

struct DumpRecord {
  PerfKey key;
  double value = 0.0;
  double age_s = 0.0;
};

class PerfMap;

// Read access under one shared lock: every read through a view sees the
// same point in time. GPUs are addressed by the dense index from index_of.
class PerfView {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::size_t index_of(const GpuId& id) const;
  const GpuId& id_of(std::size_t index) const;
  std::size_t slot_count() const;
  int layer_count() const;
  bool registered(std::size_t index) const;
  std::optional<double> tau(std::size_t gpu, int layer) const;
  std::optional<double> rho(std::size_t from, std::size_t to) const;
  double now() const { return now_; }

 private:
  friend class PerfMap;
  PerfView(const PerfMap& map, double now) : map_(map), now_(now) {}
  const PerfMap& map_;
  double now_;
};

// In-process stand-in for the DHT that carries the live performance map.
// Entries expire ttl seconds after publication. Thread-safe: writers take
// an exclusive lock, readers a shared one.
class PerfMap {
 public:
  explicit PerfMap(int layer_count, PerfMapConfig config = {});

  PerfMap(const PerfMap&) = delete;
  PerfMap& operator=(const PerfMap&) = delete;

  int layer_count() const { return layers_; }
  const PerfMapConfig& config() const { return config_; }

  // Throws DuplicateGpuId when already registered.
  void register_gpu(const GpuId& id);
  bool is_registered(const GpuId& id) const;
  // Drops the GPU and every key that mentions it.
  void withdraw(const GpuId& id);
  std::vector<GpuId> registered_gpus() const;

  // Throws UnknownGpu when the key names an unregistered GPU and
  // InputError when the layer is out of range.
  void publish(const PerfKey& key, double value, double now);
  std::optional<double> read(const PerfKey& key, double now) const;

  template <typename Fn>
  decltype(auto) with_snapshot(double now, Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return std::forward<Fn>(fn)(PerfView(*this, now));
  }

  // Idle per-token latency of a hosted layer; chain events republish tau as
  // base * slowdown(occupancy). Zero clears the layer.
  void set_base_latency(const GpuId& id, int first_layer, int last_layer,
                        double seconds);

  enum class ChainEvent { kSelect, kRelease };
  // Adjusts the occupancy of every GPU on the chain and republishes its tau
  // entries at once. Returns the published (key, value) pairs.
  std::vector<std::pair<PerfKey, double>> on_chain_event(
      const PipelineChain& chain, ChainEvent event, double now);
  int occupancy(const GpuId& id) const;

  // Republishes tau for every hosted layer from the current occupancy.
  void refresh_latency(const GpuId& id, double now);

  std::vector<DumpRecord> dump(double now) const;

 private:
  friend class PerfView;

  struct Slot {
    double value = 0.0;
    double published_at = 0.0;
    bool present = false;
  };
  struct Node {
    GpuId id;
    bool alive = false;
    int occupancy = 0;
    Slot attr;
    std::vector<Slot> tau;
    std::vector<double> base_tau;
    std::vector<Slot> rho;
  };

  std::size_t require_index(const GpuId& id) const;
  std::optional<double> live(const Slot& slot, double now) const;
  void publish_locked(const PerfKey& key, double value, double now);
  void republish_locked(Node& node, double now,
                        std::vector<std::pair<PerfKey, double>>* out);

  int layers_;
  PerfMapConfig config_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<GpuId, std::size_t> index_;
  std::vector<Node> nodes_;
};

struct GpuUsage {
  double kv_tokens = 0.0;
  double compute_flops = 0.0;
};

struct LayerLoad {
  int layer = 0;
  double kv_fraction = 0.0;
  double compute_fraction = 0.0;
  double mix_alpha = 0.5;

  double load() const {
    return mix_alpha * kv_fraction + (1.0 - mix_alpha) * compute_fraction;
  }
};

inline constexpr double kDefaultLoadMix = 0.5;

// Per-layer load from the usage of the GPUs hosting each layer. A fraction
// whose cluster total is zero contributes zero.
std::vector<LayerLoad> layer_loads(int layers,
                                   std::span<const LayerSlice> placement,
                                   const std::map<GpuId, GpuUsage>& usage,
                                   double total_memory, double total_flops,
                                   double mix_alpha = kDefaultLoadMix);

// Population stddev / mean, or 0 when the mean is 0.
double layer_load_cov(std::span<const double> loads);
double layer_load_cov(std::span<const LayerLoad> loads);

}  // namespace decserve

#endif  // DECSERVE_PERF_MAP_HPP_
