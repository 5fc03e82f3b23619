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

#ifndef DECSERVE_BENCH_HPP_
#define DECSERVE_BENCH_HPP_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "decserve/phase1.hpp"
#include "decserve/topology.hpp"

namespace decserve {

struct BenchPoint {
  int gpus = 0;
  int regions = 0;
  int replicas = 0;
  double phase1_ms = 0.0;
  double phase2_ms_per_req = 0.0;
  int routings = 0;
  // Mean relaxations per routing, against (L - 1) * avg_replicas^2.
  double edges_per_route = 0.0;
  double avg_replicas = 0.0;
  double predicted_edges = 0.0;
};

struct BenchOptions {
  std::vector<int> gpu_counts = {4, 8, 16, 32, 64, 128, 256};
  int layers = 64;
  int routings = 1000;
  std::uint64_t seed = 0;
  AllocatorSettings allocator;
};

// Synthetic cluster of n GPUs: capacities uniform in 4..32 layers, 2 to 4
// regions, heterogeneous compute. Deterministic in seed.
ClusterSnapshot bench_cluster(int gpus, const ModelSpec& model,
                              std::uint64_t seed);
ModelSpec bench_model(int layers);

BenchPoint bench_point(int gpus, const BenchOptions& options);
std::vector<BenchPoint> run_bench(const BenchOptions& options);
void write_bench_csv(std::ostream& out, const std::vector<BenchPoint>& points);

}  // namespace decserve

#endif  // DECSERVE_BENCH_HPP_
