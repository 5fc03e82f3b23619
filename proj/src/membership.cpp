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

#include "decserve/membership.hpp"

#include <algorithm>

#include "decserve/errors.hpp"
#include "decserve/latency_model.hpp"

namespace decserve {

const char* to_string(RebalanceAction action) {
  switch (action) {
    case RebalanceAction::kNone:
      return "none";
    case RebalanceAction::kLocal:
      return "local";
    case RebalanceAction::kGlobal:
      return "global";
  }
  return "?";
}

const char* to_string(RebalanceReason reason) {
  switch (reason) {
    case RebalanceReason::kFullCoverage:
      return "full_coverage";
    case RebalanceReason::kUncoveredLayers:
      return "uncovered_layers";
    case RebalanceReason::kCovExceeded:
      return "cov_exceeded";
  }
  return "?";
}

MembershipManager::MembershipManager(ClusterSnapshot cluster, ModelSpec model,
                                     AllocationPlan plan, PerfMap& perf,
                                     MembershipConfig config)
    : cluster_(std::move(cluster)),
      model_(std::move(model)),
      plan_(std::move(plan)),
      placement_(plan_.slices()),
      perf_(perf),
      config_(std::move(config)) {
  if (perf_.layer_count() != model_.layer_count) {
    throw InputError("perf map layer count does not match the model");
  }
}

std::optional<LayerSlice> MembershipManager::slice_of(const GpuId& id) const {
  for (const auto& s : placement_) {
    if (s.gpu_id == id) return s;
  }
  return std::nullopt;
}

void MembershipManager::publish_gpu(const GpuNode& gpu, double now) {
  perf_.publish(PerfKey::node_attr(gpu.id),
                static_cast<double>(gpu.ram_token_capacity), now);
  perf_.refresh_latency(gpu.id, now);
  for (const auto& other : cluster_.gpus) {
    if (other.id == gpu.id || !perf_.is_registered(other.id)) continue;
    perf_.publish(PerfKey::link_rtt(gpu.id, other.id),
                  cluster_.rtt(gpu.id, other.id), now);
    perf_.publish(PerfKey::link_rtt(other.id, gpu.id),
                  cluster_.rtt(other.id, gpu.id), now);
  }
}

void MembershipManager::place(const LayerSlice& slice, double now) {
  const GpuNode* gpu = cluster_.find(slice.gpu_id);
  if (!gpu) throw UnknownGpu(slice.gpu_id);
  placement_.push_back(slice);
  perf_.set_base_latency(slice.gpu_id, slice.start_layer, slice.end_layer,
                         LatencyModel::base_layer_time(*gpu, model_));
  perf_.refresh_latency(slice.gpu_id, now);
}

void MembershipManager::unplace(const GpuId& id) {
  std::erase_if(placement_, [&](const LayerSlice& s) { return s.gpu_id == id; });
  if (perf_.is_registered(id)) {
    perf_.set_base_latency(id, 1, model_.layer_count, 0.0);
  }
}

void MembershipManager::bootstrap(double now) {
  for (const auto& gpu : cluster_.gpus) {
    if (!perf_.is_registered(gpu.id)) perf_.register_gpu(gpu.id);
  }
  for (const auto& s : placement_) {
    const GpuNode* gpu = cluster_.find(s.gpu_id);
    if (!gpu) throw UnknownGpu(s.gpu_id);
    perf_.set_base_latency(s.gpu_id, s.start_layer, s.end_layer,
                           LatencyModel::base_layer_time(*gpu, model_));
  }
  publish_all(now);
}

void MembershipManager::publish_all(double now) {
  for (const auto& gpu : cluster_.gpus) {
    if (perf_.is_registered(gpu.id)) publish_gpu(gpu, now);
  }
}

void MembershipManager::publish(const GpuId& id, double now) {
  const GpuNode* gpu = cluster_.find(id);
  if (!gpu) throw UnknownGpu(id);
  publish_gpu(*gpu, now);
}

std::vector<double> MembershipManager::layer_ram_capacity(double now) const {
  std::vector<double> ram(static_cast<std::size_t>(model_.layer_count), 0.0);
  for (const auto& s : placement_) {
    const double cap =
        perf_.read(PerfKey::node_attr(s.gpu_id), now).value_or(0.0);
    for (int l = s.start_layer; l <= s.end_layer; ++l) ram[l - 1] += cap;
  }
  return ram;
}

LayerSlice MembershipManager::on_join(const GpuNode& gpu, double now) {
  if (cluster_.find(gpu.id)) throw DuplicateGpuId(gpu.id);
  cluster_.gpus.push_back(gpu);
  cluster_.regions.insert(gpu.region);
  perf_.register_gpu(gpu.id);

  const int capacity = layer_capacity(gpu, model_);
  if (capacity <= 0) {
    publish_gpu(gpu, now);
    throw ZeroCapacity(gpu.id);
  }

  const std::vector<double> ram = layer_ram_capacity(now);
  const auto weakest = std::min_element(ram.begin(), ram.end());
  const int bottleneck = static_cast<int>(weakest - ram.begin()) + 1;
  const LayerSlice slice{gpu.id, bottleneck,
                         std::min(bottleneck + capacity - 1, model_.layer_count)};
  place(slice, now);
  publish_gpu(gpu, now);
  return slice;
}

RebalanceDecision MembershipManager::on_leave(const GpuId& id, double now) {
  (void)now;
  auto it = std::find_if(cluster_.gpus.begin(), cluster_.gpus.end(),
                         [&](const GpuNode& g) { return g.id == id; });
  if (it == cluster_.gpus.end()) throw UnknownGpu(id);
  cluster_.gpus.erase(it);
  for (auto link = cluster_.links.begin(); link != cluster_.links.end();) {
    if (link->first.first == id || link->first.second == id) {
      link = cluster_.links.erase(link);
    } else {
      ++link;
    }
  }

  // A pipeline that lost a stage is no longer a formal replica; its other
  // stages stay in the placement as loose replicas.
  std::erase_if(plan_.pipelines, [&](const Pipeline& p) {
    return std::any_of(p.stages.begin(), p.stages.end(),
                       [&](const LayerSlice& s) { return s.gpu_id == id; });
  });
  std::erase_if(placement_, [&](const LayerSlice& s) { return s.gpu_id == id; });
  usage_.erase(id);
  if (perf_.is_registered(id)) perf_.withdraw(id);
  return evaluate_triggers();
}

std::vector<int> MembershipManager::uncovered_layers() const {
  std::vector<int> hosts(static_cast<std::size_t>(model_.layer_count), 0);
  for (const auto& s : placement_) {
    for (int l = std::max(s.start_layer, 1);
         l <= std::min(s.end_layer, model_.layer_count); ++l) {
      ++hosts[l - 1];
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    if (hosts[i] == 0) out.push_back(static_cast<int>(i) + 1);
  }
  return out;
}

std::vector<LayerLoad> MembershipManager::layer_loads() const {
  double memory = 0.0;
  double flops = 0.0;
  for (const auto& g : cluster_.gpus) {
    memory += static_cast<double>(g.ram_token_capacity);
    flops += g.flops;
  }
  return decserve::layer_loads(model_.layer_count, placement_, usage_, memory,
                               flops, config_.load_mix);
}

RebalanceDecision MembershipManager::evaluate_triggers() const {
  RebalanceDecision decision;
  if (!uncovered_layers().empty()) {
    decision.action = RebalanceAction::kGlobal;
    decision.reason = RebalanceReason::kUncoveredLayers;
    return decision;
  }
  const std::vector<LayerLoad> loads = layer_loads();
  decision.cov_value = layer_load_cov(loads);
  if (decision.cov_value > config_.cov_threshold) {
    decision.action = RebalanceAction::kGlobal;
    decision.reason = RebalanceReason::kCovExceeded;
  }
  return decision;
}

RebalanceDiff MembershipManager::global_rebalance(double now) {
  AllocationPlan next;
  try {
    next = allocate(cluster_, model_, config_.allocator);
  } catch (const NoFeasiblePipeline&) {
    degraded_ = true;
    throw;
  }
  degraded_ = false;

  const std::vector<LayerSlice> target = next.slices();
  RebalanceDiff diff;
  for (const auto& s : target) {
    auto old = slice_of(s.gpu_id);
    if (!old || !(*old == s)) diff.reload.push_back(s.gpu_id);
  }
  for (const auto& s : placement_) {
    const bool kept = std::any_of(target.begin(), target.end(),
                                  [&](const LayerSlice& t) {
                                    return t.gpu_id == s.gpu_id;
                                  });
    if (!kept) diff.evict.push_back(s.gpu_id);
  }
  std::sort(diff.reload.begin(), diff.reload.end());
  std::sort(diff.evict.begin(), diff.evict.end());

  for (const auto& id : diff.evict) unplace(id);
  for (const auto& id : diff.reload) unplace(id);
  for (const auto& s : target) {
    if (std::binary_search(diff.reload.begin(), diff.reload.end(), s.gpu_id)) {
      place(s, now);
    }
  }
  plan_ = std::move(next);
  // Keep placement in plan order so later diffs compare like with like.
  placement_ = plan_.slices();
  return diff;
}

}  // namespace decserve
