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

#ifndef DECSERVE_LATENCY_MODEL_HPP_
#define DECSERVE_LATENCY_MODEL_HPP_

#include <cmath>

#include "decserve/topology.hpp"

namespace decserve {

// Per-token layer time on a GPU, slowed by the number of requests sharing
// it: tau_eff = tau_base * (1 + occupancy)^exponent.
struct LatencyModel {
  double contention_exponent = 1.0;
  // Charge each cross-GPU hop once per request instead of once per token.
  bool amortize_rtt = false;

  static double base_layer_time(const GpuNode& gpu, const ModelSpec& model) {
    return model.flops_per_layer_per_token / gpu.flops;
  }
  double slowdown(int occupancy) const {
    if (occupancy <= 0) return 1.0;
    return std::pow(1.0 + occupancy, contention_exponent);
  }
  double effective_layer_time(double base, int occupancy) const {
    return base * slowdown(occupancy);
  }
};

}  // namespace decserve

#endif  // DECSERVE_LATENCY_MODEL_HPP_
