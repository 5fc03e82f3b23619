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

#ifndef DECSERVE_TOPOLOGY_HPP_
#define DECSERVE_TOPOLOGY_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace decserve {

using GpuId = std::string;
using RegionId = std::string;

// The model being placed. Every layer has the same memory footprint; embedding
// and head parameters are folded into the per-layer cost.
struct ModelSpec {
  std::string name;
  int layer_count = 1;
  double bytes_per_layer = 1.0;
  double flops_per_layer_per_token = 1.0;
};

struct GpuNode {
  GpuId id;
  RegionId region;
  double vram_bytes = 0.0;
  // Fraction of VRAM withheld for activations and the KV cache.
  double reserve_fraction = 0.2;
  // Effective compute capacity in FLOP/s.
  double flops = 0.0;
  // KV tokens each hosted layer can hold.
  std::int64_t ram_token_capacity = 0;
};

inline constexpr double kDefaultReserveFraction = 0.2;
inline constexpr double kDefaultCrossRegionRtt = 0.010;

// A set of GPUs plus one-way link latencies. Links not listed fall back to
// default_cross_region_rtt; a GPU's latency to itself is always zero.
struct ClusterSnapshot {
  std::vector<GpuNode> gpus;
  std::map<std::pair<GpuId, GpuId>, double> links;
  std::set<RegionId> regions;
  double default_cross_region_rtt = kDefaultCrossRegionRtt;

  const GpuNode* find(const GpuId& id) const;
  // One-way latency in seconds. A link declared only as (b, a) is used for
  // (a, b) as well.
  double rtt(const GpuId& from, const GpuId& to) const;
  std::vector<const GpuNode*> region_gpus(const RegionId& region) const;
};

// A contiguous, 1-based inclusive range of layers owned by one GPU.
struct LayerSlice {
  GpuId gpu_id;
  int start_layer = 1;
  int end_layer = 1;

  int length() const { return end_layer - start_layer + 1; }
  bool contains(int layer) const {
    return layer >= start_layer && layer <= end_layer;
  }
  friend bool operator==(const LayerSlice&, const LayerSlice&) = default;
};

// floor(vram * (1 - reserve) / bytes_per_layer).
int layer_capacity(const GpuNode& gpu, const ModelSpec& model);

enum class ViolationKind { kDuplicateGpuId, kNegativeRtt, kUnknownRegion };

struct SnapshotViolation {
  ViolationKind kind;
  // The offending gpu id, or "from->to" for a link.
  std::string subject;
  std::string message() const;
  friend bool operator==(const SnapshotViolation&,
                         const SnapshotViolation&) = default;
};

// Empty when the snapshot is valid.
std::vector<SnapshotViolation> validate_snapshot(const ClusterSnapshot& cluster);

// Throws InputError listing every violation.
const ClusterSnapshot& require_valid(const ClusterSnapshot& cluster);

void validate_model(const ModelSpec& model);

}  // namespace decserve

#endif  // DECSERVE_TOPOLOGY_HPP_
