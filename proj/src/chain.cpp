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

#include "decserve/chain.hpp"

#include <algorithm>
#include <sstream>

namespace decserve {

std::vector<GpuId> PipelineChain::gpus() const {
  std::vector<GpuId> out;
  for (const auto& hop : hops) {
    if (std::find(out.begin(), out.end(), hop.gpu_id) == out.end()) {
      out.push_back(hop.gpu_id);
    }
  }
  return out;
}

std::string check_chain(const PipelineChain& chain, int layers,
                        const std::vector<LayerSlice>& placement) {
  std::ostringstream err;
  int expected = 1;
  for (const auto& hop : chain.hops) {
    if (hop.start_layer != expected || hop.end_layer < hop.start_layer) {
      err << "hop on " << hop.gpu_id << " starts at " << hop.start_layer
          << ", expected " << expected;
      return err.str();
    }
    const bool hosted = std::any_of(
        placement.begin(), placement.end(), [&](const LayerSlice& s) {
          return s.gpu_id == hop.gpu_id && s.start_layer <= hop.start_layer &&
                 hop.end_layer <= s.end_layer;
        });
    if (!hosted) {
      err << "hop " << hop.gpu_id << " [" << hop.start_layer << ","
          << hop.end_layer << "] is not hosted there";
      return err.str();
    }
    expected = hop.end_layer + 1;
  }
  if (expected != layers + 1) {
    err << "chain ends at layer " << expected - 1 << " instead of " << layers;
    return err.str();
  }
  return {};
}

}  // namespace decserve
