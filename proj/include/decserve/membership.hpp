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

#ifndef DECSERVE_MEMBERSHIP_HPP_
#define DECSERVE_MEMBERSHIP_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "decserve/perf_map.hpp"
#include "decserve/phase1.hpp"
#include "decserve/topology.hpp"

namespace decserve {

struct MembershipEvent {
  enum class Kind { kJoin, kLeave };

  Kind kind = Kind::kJoin;
  double at = 0.0;
  // Set for joins.
  GpuNode gpu;
  // Set for leaves.
  GpuId gpu_id;
};

enum class RebalanceAction { kNone, kLocal, kGlobal };
enum class RebalanceReason { kFullCoverage, kUncoveredLayers, kCovExceeded };

struct RebalanceDecision {
  RebalanceAction action = RebalanceAction::kNone;
  RebalanceReason reason = RebalanceReason::kFullCoverage;
  double cov_value = 0.0;
};

const char* to_string(RebalanceAction action);
const char* to_string(RebalanceReason reason);

// GPUs touched by a global rebalance.
struct RebalanceDiff {
  // New or moved slices: these GPUs reload weights.
  std::vector<GpuId> reload;
  // GPUs that lost their slice.
  std::vector<GpuId> evict;

  bool empty() const { return reload.empty() && evict.empty(); }
};

struct MembershipConfig {
  double cov_threshold = 0.5;
  double load_mix = kDefaultLoadMix;
  AllocatorSettings allocator;
};

// Applies joins and leaves to the serving placement and decides when the
// whole placement must be recomputed. Events are expected on one thread.
class MembershipManager {
 public:
  MembershipManager(ClusterSnapshot cluster, ModelSpec model,
                    AllocationPlan plan, PerfMap& perf,
                    MembershipConfig config = {});

  const ClusterSnapshot& cluster() const { return cluster_; }
  const ModelSpec& model() const { return model_; }
  // Formal pipelines from the last allocation, minus any broken by leaves.
  const AllocationPlan& plan() const { return plan_; }
  // Every hosted slice, including GPUs that joined since the last
  // allocation.
  const std::vector<LayerSlice>& placement() const { return placement_; }
  std::optional<LayerSlice> slice_of(const GpuId& id) const;
  bool degraded() const { return degraded_; }

  // Registers every cluster GPU with the perf map and publishes its
  // attributes, latencies and links.
  void bootstrap(double now);
  // Periodic republish from every live GPU, or from one.
  void publish_all(double now);
  void publish(const GpuId& id, double now);

  // Places the new GPU on the layer with the least aggregate KV capacity.
  // Throws DuplicateGpuId, or ZeroCapacity after registering a GPU that
  // cannot hold one layer.
  LayerSlice on_join(const GpuNode& gpu, double now);
  // Throws UnknownGpu.
  RebalanceDecision on_leave(const GpuId& id, double now);
  RebalanceDecision evaluate_triggers() const;
  // Recomputes the placement from scratch. Throws NoFeasiblePipeline and
  // marks the state degraded when the model no longer fits.
  RebalanceDiff global_rebalance(double now);

  void set_usage(std::map<GpuId, GpuUsage> usage) { usage_ = std::move(usage); }
  std::vector<LayerLoad> layer_loads() const;
  std::vector<int> uncovered_layers() const;
  // Aggregate KV capacity of the live hosts of each layer, read from the
  // perf map.
  std::vector<double> layer_ram_capacity(double now) const;

 private:
  void publish_gpu(const GpuNode& gpu, double now);
  void place(const LayerSlice& slice, double now);
  void unplace(const GpuId& id);

  ClusterSnapshot cluster_;
  ModelSpec model_;
  AllocationPlan plan_;
  std::vector<LayerSlice> placement_;
  PerfMap& perf_;
  MembershipConfig config_;
  std::map<GpuId, GpuUsage> usage_;
  bool degraded_ = false;
};

}  // namespace decserve

#endif  // DECSERVE_MEMBERSHIP_HPP_
