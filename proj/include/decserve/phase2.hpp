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

#ifndef DECSERVE_PHASE2_HPP_
#define DECSERVE_PHASE2_HPP_

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "decserve/chain.hpp"
#include "decserve/perf_map.hpp"
#include "decserve/phase1.hpp"

namespace decserve {

inline constexpr double kNoLink = std::numeric_limits<double>::infinity();

struct DagNode {
  // Index into LayerDag::gpu_ids.
  std::size_t gpu = 0;
  double tau = 0.0;
};

// Layer-indexed DAG of live layer replicas. Node (l, g) exists when g hosts
// layer l with a live tau; edges only join layer l to layer l + 1.
struct LayerDag {
  int layer_count = 0;
  // Sorted, so node order within a layer is lexicographic by id.
  std::vector<GpuId> gpu_ids;
  // layers[l - 1] holds the replicas of layer l, ordered by gpu index.
  std::vector<std::vector<DagNode>> layers;
  // gpu_ids.size()^2 one-way latencies; kNoLink when no live entry. The
  // diagonal is zero.
  std::vector<double> rho;

  double link(std::size_t from, std::size_t to) const {
    return rho[from * gpu_ids.size() + to];
  }
  std::size_t node_count() const;
  std::size_t edge_count() const;
  // Average live replicas per layer.
  double avg_replicas() const;
};

struct SweepStats {
  std::size_t relaxations = 0;
};

// Returns false to keep a GPU out of the DAG.
using GpuFilter = std::function<bool(const GpuId&)>;

// Throws UncoveredLayer when some layer has no admitted live replica.
LayerDag build_dag(std::span<const LayerSlice> placement, const PerfView& view,
                   const GpuFilter& admit = {});
LayerDag build_dag(const AllocationPlan& plan, const PerfMap& perf, double now);

// Single left-to-right sweep; ties keep the lexicographically smaller GPU.
// Throws NoPath when no node of the last layer is reachable.
PipelineChain select_chain(const LayerDag& dag, SweepStats* stats = nullptr);

// Pins chains to sessions and feeds selections back into the perf map so
// later requests see the added load.
class Router {
 public:
  explicit Router(PerfMap& perf) : perf_(perf) {}

  PipelineChain route_request(const std::string& session,
                              std::span<const LayerSlice> placement,
                              double now, const GpuFilter& admit = {},
                              SweepStats* stats = nullptr);
  // Releases the chain pinned to the session. GPUs that have left in the
  // meantime are skipped. Returns false for an unknown session.
  bool release(const std::string& session, double now);
  std::optional<PipelineChain> session(const std::string& session) const;
  // Sessions whose chain passes through the GPU.
  std::vector<std::string> sessions_on(const GpuId& gpu) const;
  std::size_t active_sessions() const;

 private:
  PerfMap& perf_;
  mutable std::mutex mutex_;
  std::map<std::string, PipelineChain> sessions_;
};

}  // namespace decserve

#endif  // DECSERVE_PHASE2_HPP_
