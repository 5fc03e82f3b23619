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

#ifndef DECSERVE_PHASE1_HPP_
#define DECSERVE_PHASE1_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decserve/topology.hpp"

namespace decserve {

// One model replica: contiguous stages in layer order, all in one region.
struct Pipeline {
  RegionId region;
  std::vector<LayerSlice> stages;

  friend bool operator==(const Pipeline&, const Pipeline&) = default;
};

struct PerKEntry {
  RegionId region;
  int k = 0;
  int s_star = 0;
  double z = 0.0;

  friend bool operator==(const PerKEntry&, const PerKEntry&) = default;
};

struct AllocationPlan {
  // Total replicas across regions.
  int replication_count = 0;
  // Total stages across all pipelines.
  int stage_total = 0;
  // Sum of the per-region objective values at their chosen k.
  double objective_score = 0.0;
  std::vector<Pipeline> pipelines;
  std::vector<PerKEntry> per_k;

  // Every stage of every pipeline.
  std::vector<LayerSlice> slices() const;
  int layer_count() const;
};

struct ObjectiveParams {
  double alpha = 1.0;
  double t_comp_seconds = 0.0;
  double rtt_seconds = 0.0;
};

// Search state: GPUs [0, gpu_index) have been decided; residuals holds the
// layers still missing from each partially assigned pipeline (sorted).
struct Dp1State {
  std::size_t gpu_index = 0;
  std::vector<int> residuals;
  int full_count = 0;

  friend auto operator<=>(const Dp1State&, const Dp1State&) = default;
};

struct StageSolution {
  int stages = 0;
  // groups[p] lists the capacity indices assigned to pipeline p, in
  // assignment order.
  std::vector<std::vector<std::size_t>> groups;
  // False only when the search budget ran out and the best solution found
  // so far is returned.
  bool proven_optimal = true;
};

struct Dp1Options {
  // When false, runs the plain memoized recursion over (i, r, f) with all
  // three transitions. Exponential; meant for small instances and tests.
  bool pruned = true;
  // Search nodes per prefix size s before giving up on proving optimality;
  // after that each s gets a small fallback budget.
  std::size_t node_budget = 20'000;
};

// min(N, floor(sum c / L)); zero-capacity GPUs count towards N.
int k_max(std::span<const int> capacities, int layers);

// Minimum total stages to complete exactly k pipelines, or nullopt when
// infeasible. capacities must be sorted non-increasing.
std::optional<StageSolution> min_stages(std::span<const int> capacities,
                                        int layers, int k,
                                        const Dp1Options& options = {});

// Z(k) = k^alpha / (t_comp + (s*/k) * rtt).
double score(int k, int s_star, const ObjectiveParams& params);

// T_comp from the harmonic mean of region compute, r_RTT from the mean
// pairwise intra-region latency.
ObjectiveParams estimate_objective_params(const ClusterSnapshot& cluster,
                                          const RegionId& region,
                                          const ModelSpec& model, double alpha,
                                          double mean_tokens_per_request = 1.0);

struct AllocatorSettings {
  double alpha = 1.0;
  double mean_tokens_per_request = 1.0;
  // Applied to every region when set; otherwise estimated per region.
  std::optional<ObjectiveParams> fixed_params;
  Dp1Options dp;
  bool rebalance = true;
};

// Per-region DP, argmax Z(k), backtracking and water-filling. Throws
// NoFeasiblePipeline when no region can host the model.
AllocationPlan allocate(const ClusterSnapshot& cluster, const ModelSpec& model,
                        const AllocatorSettings& settings = {});

AllocationPlan allocate(const ClusterSnapshot& cluster, const ModelSpec& model,
                        const ObjectiveParams& params);

// Checks the AllocationPlan invariants against the cluster; returns a
// description of the first violation, or an empty string. Cross-region
// pipelines pass when same_region is false.
std::string check_plan(const AllocationPlan& plan,
                       const ClusterSnapshot& cluster, const ModelSpec& model,
                       bool same_region = true);

}  // namespace decserve

#endif  // DECSERVE_PHASE1_HPP_
