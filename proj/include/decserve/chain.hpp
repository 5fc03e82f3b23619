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

#ifndef DECSERVE_CHAIN_HPP_
#define DECSERVE_CHAIN_HPP_

#include <string>
#include <vector>

#include "decserve/topology.hpp"

namespace decserve {

struct ChainHop {
  GpuId gpu_id;
  int start_layer = 1;
  int end_layer = 1;

  int length() const { return end_layer - start_layer + 1; }
  friend bool operator==(const ChainHop&, const ChainHop&) = default;
};

// The GPUs one request runs through, covering layers 1..L in order.
struct PipelineChain {
  std::vector<ChainHop> hops;
  double predicted_latency = 0.0;
  std::string session_id;

  // Distinct GPUs in hop order.
  std::vector<GpuId> gpus() const;
  friend bool operator==(const PipelineChain&, const PipelineChain&) = default;
};

// Empty when the chain covers 1..layers exactly once, in order, and every
// hop lies inside a slice its GPU hosts.
std::string check_chain(const PipelineChain& chain, int layers,
                        const std::vector<LayerSlice>& placement);

}  // namespace decserve

#endif  // DECSERVE_CHAIN_HPP_
