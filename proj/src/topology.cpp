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

#include "decserve/topology.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "decserve/errors.hpp"

namespace decserve {

const GpuNode* ClusterSnapshot::find(const GpuId& id) const {
  for (const auto& gpu : gpus) {
    if (gpu.id == id) return &gpu;
  }
  return nullptr;
}

double ClusterSnapshot::rtt(const GpuId& from, const GpuId& to) const {
  if (from == to) return 0.0;
  if (auto it = links.find({from, to}); it != links.end()) return it->second;
  if (auto it = links.find({to, from}); it != links.end()) return it->second;
  return default_cross_region_rtt;
}

std::vector<const GpuNode*> ClusterSnapshot::region_gpus(
    const RegionId& region) const {
  std::vector<const GpuNode*> out;
  for (const auto& gpu : gpus) {
    if (gpu.region == region) out.push_back(&gpu);
  }
  return out;
}

int layer_capacity(const GpuNode& gpu, const ModelSpec& model) {
  const double usable = gpu.vram_bytes * (1.0 - gpu.reserve_fraction);
  if (usable <= 0.0 || model.bytes_per_layer <= 0.0) return 0;
  const double ratio = usable / model.bytes_per_layer;
  // Absorb representation error such as 28.8e9 / 0.9e9 = 31.999...
  auto layers = static_cast<long long>(std::floor(ratio * (1.0 + 1e-12)));
  if (static_cast<double>(layers) * model.bytes_per_layer >
      usable * (1.0 + 1e-9)) {
    --layers;
  }
  if (layers < 0) return 0;
  if (layers > 1'000'000'000LL) return 1'000'000'000;
  return static_cast<int>(layers);
}

std::string SnapshotViolation::message() const {
  switch (kind) {
    case ViolationKind::kDuplicateGpuId:
      return "DuplicateGpuId(" + subject + ")";
    case ViolationKind::kNegativeRtt:
      return "NegativeRtt(" + subject + ")";
    case ViolationKind::kUnknownRegion:
      return "UnknownRegion(" + subject + ")";
  }
  return subject;
}

std::vector<SnapshotViolation> validate_snapshot(
    const ClusterSnapshot& cluster) {
  std::vector<SnapshotViolation> out;
  std::unordered_set<GpuId> seen;
  for (const auto& gpu : cluster.gpus) {
    if (!seen.insert(gpu.id).second) {
      out.push_back({ViolationKind::kDuplicateGpuId, gpu.id});
    }
    if (!cluster.regions.contains(gpu.region)) {
      out.push_back({ViolationKind::kUnknownRegion, gpu.region});
    }
  }
  for (const auto& [pair, rtt] : cluster.links) {
    if (!(rtt >= 0.0)) {
      out.push_back(
          {ViolationKind::kNegativeRtt, pair.first + "->" + pair.second});
    }
  }
  return out;
}

const ClusterSnapshot& require_valid(const ClusterSnapshot& cluster) {
  auto violations = validate_snapshot(cluster);
  if (violations.empty()) return cluster;
  std::ostringstream os;
  os << "invalid cluster:";
  for (const auto& v : violations) os << ' ' << v.message();
  throw InputError(os.str());
}

void validate_model(const ModelSpec& model) {
  if (model.layer_count < 1) throw InputError("layer_count must be >= 1");
  if (!(model.bytes_per_layer > 0.0)) {
    throw InputError("bytes_per_layer must be > 0");
  }
  if (!(model.flops_per_layer_per_token > 0.0)) {
    throw InputError("flops_per_layer_per_token must be > 0");
  }
}

}  // namespace decserve
