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

#include "decserve/phase2.hpp"

#include <algorithm>

#include "decserve/errors.hpp"

namespace decserve {

std::size_t LayerDag::node_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.size();
  return n;
}

std::size_t LayerDag::edge_count() const {
  std::size_t edges = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    for (const auto& a : layers[l]) {
      for (const auto& b : layers[l + 1]) {
        if (link(a.gpu, b.gpu) != kNoLink) ++edges;
      }
    }
  }
  return edges;
}

double LayerDag::avg_replicas() const {
  if (layer_count <= 0) return 0.0;
  return static_cast<double>(node_count()) / layer_count;
}

LayerDag build_dag(std::span<const LayerSlice> placement, const PerfView& view,
                   const GpuFilter& admit) {
  const int layers = view.layer_count();

  std::vector<GpuId> ids;
  for (const auto& s : placement) {
    if (view.index_of(s.gpu_id) == PerfView::kNone) continue;
    if (admit && !admit(s.gpu_id)) continue;
    ids.push_back(s.gpu_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  LayerDag dag;
  dag.layer_count = layers;
  dag.gpu_ids = ids;
  dag.layers.resize(static_cast<std::size_t>(layers));

  std::vector<std::size_t> perf_index(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    perf_index[i] = view.index_of(ids[i]);
  }

  for (const auto& s : placement) {
    auto it = std::lower_bound(ids.begin(), ids.end(), s.gpu_id);
    if (it == ids.end() || *it != s.gpu_id) continue;
    const auto local = static_cast<std::size_t>(it - ids.begin());
    for (int l = std::max(s.start_layer, 1);
         l <= std::min(s.end_layer, layers); ++l) {
      auto tau = view.tau(perf_index[local], l);
      if (!tau) continue;
      dag.layers[l - 1].push_back({local, *tau});
    }
  }
  for (std::size_t l = 0; l < dag.layers.size(); ++l) {
    auto& nodes = dag.layers[l];
    std::sort(nodes.begin(), nodes.end(),
              [](const DagNode& a, const DagNode& b) { return a.gpu < b.gpu; });
    nodes.erase(std::unique(nodes.begin(), nodes.end(),
                            [](const DagNode& a, const DagNode& b) {
                              return a.gpu == b.gpu;
                            }),
                nodes.end());
    if (nodes.empty()) throw UncoveredLayer(static_cast<int>(l) + 1);
  }

  const std::size_t n = ids.size();
  dag.rho.assign(n * n, kNoLink);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) {
        dag.rho[a * n + b] = 0.0;
      } else if (auto r = view.rho(perf_index[a], perf_index[b])) {
        dag.rho[a * n + b] = *r;
      }
    }
  }
  return dag;
}

LayerDag build_dag(const AllocationPlan& plan, const PerfMap& perf,
                   double now) {
  const std::vector<LayerSlice> slices = plan.slices();
  return perf.with_snapshot(
      now, [&](const PerfView& view) { return build_dag(slices, view); });
}

PipelineChain select_chain(const LayerDag& dag, SweepStats* stats) {
  const std::size_t layers = dag.layers.size();
  if (layers == 0 || dag.layers.front().empty()) throw NoPath();

  // cost[l][j] = cheapest path ending at node j of layer l + 1.
  std::vector<std::vector<double>> cost(layers);
  std::vector<std::vector<std::size_t>> parent(layers);
  constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

  cost[0].resize(dag.layers[0].size());
  parent[0].assign(dag.layers[0].size(), kNoParent);
  for (std::size_t j = 0; j < dag.layers[0].size(); ++j) {
    cost[0][j] = dag.layers[0][j].tau;
  }

  std::size_t relaxations = 0;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const auto& from = dag.layers[l];
    const auto& to = dag.layers[l + 1];
    cost[l + 1].assign(to.size(), kNoLink);
    parent[l + 1].assign(to.size(), kNoParent);
    for (std::size_t j = 0; j < to.size(); ++j) {
      double best = kNoLink;
      std::size_t best_parent = kNoParent;
      for (std::size_t i = 0; i < from.size(); ++i) {
        const double w = dag.link(from[i].gpu, to[j].gpu);
        if (w == kNoLink) continue;
        ++relaxations;
        if (cost[l][i] == kNoLink) continue;
        const double candidate = cost[l][i] + w + to[j].tau;
        if (candidate < best) {
          best = candidate;
          best_parent = i;
        }
      }
      cost[l + 1][j] = best;
      parent[l + 1][j] = best_parent;
    }
  }
  if (stats) stats->relaxations += relaxations;

  const auto& last = cost[layers - 1];
  std::size_t end = kNoParent;
  for (std::size_t j = 0; j < last.size(); ++j) {
    if (last[j] == kNoLink) continue;
    if (end == kNoParent || last[j] < last[end]) end = j;
  }
  if (end == kNoParent) throw NoPath();

  std::vector<std::size_t> path(layers);
  std::size_t node = end;
  for (std::size_t l = layers; l-- > 0;) {
    path[l] = dag.layers[l][node].gpu;
    node = parent[l][node];
  }

  PipelineChain chain;
  chain.predicted_latency = last[end];
  for (std::size_t l = 0; l < layers; ++l) {
    const int layer = static_cast<int>(l) + 1;
    const GpuId& id = dag.gpu_ids[path[l]];
    if (!chain.hops.empty() && chain.hops.back().gpu_id == id) {
      chain.hops.back().end_layer = layer;
    } else {
      chain.hops.push_back({id, layer, layer});
    }
  }
  return chain;
}

PipelineChain Router::route_request(const std::string& session,
                                    std::span<const LayerSlice> placement,
                                    double now, const GpuFilter& admit,
                                    SweepStats* stats) {
  std::lock_guard lock(mutex_);
  if (sessions_.contains(session)) {
    throw InputError("session already routed: " + session);
  }
  LayerDag dag = perf_.with_snapshot(now, [&](const PerfView& view) {
    return build_dag(placement, view, admit);
  });
  PipelineChain chain = select_chain(dag, stats);
  chain.session_id = session;
  perf_.on_chain_event(chain, PerfMap::ChainEvent::kSelect, now);
  sessions_.emplace(session, chain);
  return chain;
}

bool Router::release(const std::string& session, double now) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session);
  if (it == sessions_.end()) return false;
  PipelineChain live = it->second;
  std::erase_if(live.hops, [&](const ChainHop& hop) {
    return !perf_.is_registered(hop.gpu_id);
  });
  if (!live.hops.empty()) {
    perf_.on_chain_event(live, PerfMap::ChainEvent::kRelease, now);
  }
  sessions_.erase(it);
  return true;
}

std::optional<PipelineChain> Router::session(const std::string& session) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Router::sessions_on(const GpuId& gpu) const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, chain] : sessions_) {
    for (const auto& hop : chain.hops) {
      if (hop.gpu_id == gpu) {
        out.push_back(id);
        break;
      }
    }
  }
  return out;
}

std::size_t Router::active_sessions() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace decserve
