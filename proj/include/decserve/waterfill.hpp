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

#ifndef DECSERVE_WATERFILL_HPP_
#define DECSERVE_WATERFILL_HPP_

#include <map>
#include <span>
#include <vector>

#include "decserve/phase1.hpp"
#include "decserve/topology.hpp"

namespace decserve {

// Fractional layer shares x_i = min(c_i, lambda * F_i) with sum x_i = L.
struct FractionalAllocation {
  std::vector<double> shares;
  double lambda = 0.0;
};

// Integer shares summing to L exactly, each within its capacity.
struct IntegerAllocation {
  std::vector<int> shares;
};

// Binary search on lambda over [0, L / min(F) + 1] until the residual is at
// most 1e-9 * L. Throws InfeasibleCapacity when sum(capacity) < L.
FractionalAllocation solve_lambda(std::span<const double> compute,
                                  std::span<const int> capacity, int layers);

// Largest-remainder rounding that never pushes an entry past its capacity.
// Remainder ties go to the lower index.
IntegerAllocation hamilton_round(const FractionalAllocation& frac,
                                 std::span<const int> capacity);

// Re-cuts a pipeline so stage lengths follow compute capacity. The GPU
// sequence is preserved and every stage keeps at least one layer.
Pipeline rebalance_pipeline(const Pipeline& pipeline,
                            const std::map<GpuId, GpuNode>& gpus,
                            const ModelSpec& model);

}  // namespace decserve

#endif  // DECSERVE_WATERFILL_HPP_
