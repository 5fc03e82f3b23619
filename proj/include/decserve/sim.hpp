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

#ifndef DECSERVE_SIM_HPP_
#define DECSERVE_SIM_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "decserve/chain.hpp"
#include "decserve/latency_model.hpp"
#include "decserve/membership.hpp"
#include "decserve/perf_map.hpp"
#include "decserve/phase1.hpp"
#include "decserve/trace.hpp"

namespace decserve {

struct SimConfig {
  PerfMapConfig perf;
  MembershipConfig membership;
  // Keep a GPU out of a request's DAG when the request's KV tokens would
  // overflow its ram_token_capacity.
  bool enforce_kv_capacity = true;
};

// One membership-driven action taken during a run.
struct SimEventRecord {
  double at = 0.0;
  std::string what;
};

struct RequestOutcome {
  std::string id;
  double arrival_time = 0.0;
  double latency = 0.0;
  // Closed-form latency of the chain the request finished on.
  double zero_load_latency = 0.0;
};

struct MetricsReport {
  double throughput_rps = 0.0;
  double latency_avg = 0.0;
  double latency_p95 = 0.0;
  double latency_p99 = 0.0;
  double latency_p100 = 0.0;
  std::size_t total = 0;
  std::size_t completed = 0;
  std::size_t rejected = 0;
  std::size_t in_flight = 0;
  double duration_s = 0.0;
  std::map<GpuId, double> per_gpu_utilization;
  std::vector<SimEventRecord> events;
  // Completed requests in completion order. Not part of the JSON output.
  std::vector<RequestOutcome> requests;
};

// Nearest rank: the ceil(p / 100 * n)-th smallest value. Throws EmptySample.
double percentile(std::span<const double> latencies, double p);

// Zero-contention latency of a request along a chain: prefill over the
// prompt, then output_tokens decode steps, plus link latency per step.
double closed_form_latency(const PipelineChain& chain,
                           const ClusterSnapshot& cluster,
                           const ModelSpec& model, const Request& request,
                           const LatencyModel& latency);

// Replays the trace against the plan. Single-threaded and deterministic:
// equal inputs and seed give an identical report. Routing failures become
// rejections; they never abort the run.
MetricsReport run_simulation(const AllocationPlan& plan,
                             const ClusterSnapshot& cluster,
                             const ModelSpec& model,
                             std::span<const Request> trace,
                             std::span<const MembershipEvent> events,
                             std::uint64_t seed, const SimConfig& config = {});

// Comparison arm: GPUs by capacity, pipelines filled first-fit across all
// regions, layers split as evenly as capacity allows. Ignores compute
// speed and link latency. Throws NoFeasiblePipeline.
AllocationPlan baseline_plan(const ClusterSnapshot& cluster,
                             const ModelSpec& model);

}  // namespace decserve

#endif  // DECSERVE_SIM_HPP_
