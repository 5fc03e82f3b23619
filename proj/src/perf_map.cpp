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

#include "decserve/perf_map.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "decserve/errors.hpp"

namespace decserve {

std::string PerfKey::to_string() const {
  switch (kind) {
    case Kind::kLayerLatency:
      return "tau/" + gpu + "/" + std::to_string(layer);
    case Kind::kLinkRtt:
      return "rho/" + gpu + "/" + peer;
    case Kind::kNodeAttr:
      return "attr/" + gpu;
  }
  return {};
}

PerfKey PerfKey::parse(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t slash = text.find('/', start);
    parts.push_back(text.substr(start, slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  auto bad = [&] {
    return InputError("malformed perf key: " + std::string(text));
  };
  for (auto p : parts) {
    if (p.empty()) throw bad();
  }
  if (parts[0] == "attr" && parts.size() == 2) {
    return node_attr(std::string(parts[1]));
  }
  if (parts.size() != 3) throw bad();
  if (parts[0] == "rho") {
    return link_rtt(std::string(parts[1]), std::string(parts[2]));
  }
  if (parts[0] == "tau") {
    int layer = 0;
    auto [ptr, ec] = std::from_chars(parts[2].data(),
                                     parts[2].data() + parts[2].size(), layer);
    if (ec != std::errc() || ptr != parts[2].data() + parts[2].size()) {
      throw bad();
    }
    return layer_latency(std::string(parts[1]), layer);
  }
  throw bad();
}

std::size_t PerfView::index_of(const GpuId& id) const {
  auto it = map_.index_.find(id);
  return it == map_.index_.end() ? kNone : it->second;
}

const GpuId& PerfView::id_of(std::size_t index) const {
  return map_.nodes_[index].id;
}

std::size_t PerfView::slot_count() const { return map_.nodes_.size(); }

int PerfView::layer_count() const { return map_.layers_; }

bool PerfView::registered(std::size_t index) const {
  return index < map_.nodes_.size() && map_.nodes_[index].alive;
}

std::optional<double> PerfView::tau(std::size_t gpu, int layer) const {
  if (!registered(gpu) || layer < 1 || layer > map_.layers_) return std::nullopt;
  return map_.live(map_.nodes_[gpu].tau[layer - 1], now_);
}

std::optional<double> PerfView::rho(std::size_t from, std::size_t to) const {
  if (from == to) return registered(from) ? std::optional<double>(0.0)
                                          : std::nullopt;
  if (!registered(from) || !registered(to)) return std::nullopt;
  const auto& row = map_.nodes_[from].rho;
  if (to >= row.size()) return std::nullopt;
  return map_.live(row[to], now_);
}

PerfMap::PerfMap(int layer_count, PerfMapConfig config)
    : layers_(layer_count), config_(config) {
  if (layer_count < 1) throw InputError("perf map needs at least one layer");
}

std::optional<double> PerfMap::live(const Slot& slot, double now) const {
  if (!slot.present || now - slot.published_at > config_.ttl()) {
    return std::nullopt;
  }
  return slot.value;
}

void PerfMap::register_gpu(const GpuId& id) {
  std::unique_lock lock(mutex_);
  if (index_.contains(id)) throw DuplicateGpuId(id);
  Node node;
  node.id = id;
  node.alive = true;
  node.tau.resize(static_cast<std::size_t>(layers_));
  node.base_tau.assign(static_cast<std::size_t>(layers_), 0.0);
  index_.emplace(id, nodes_.size());
  nodes_.push_back(std::move(node));
}

bool PerfMap::is_registered(const GpuId& id) const {
  std::shared_lock lock(mutex_);
  return index_.contains(id);
}

void PerfMap::withdraw(const GpuId& id) {
  std::unique_lock lock(mutex_);
  const std::size_t idx = require_index(id);
  Node& node = nodes_[idx];
  node.alive = false;
  node.occupancy = 0;
  node.attr = {};
  node.tau.assign(node.tau.size(), Slot{});
  node.base_tau.assign(node.base_tau.size(), 0.0);
  node.rho.clear();
  for (auto& other : nodes_) {
    if (idx < other.rho.size()) other.rho[idx] = Slot{};
  }
  index_.erase(id);
}

std::vector<GpuId> PerfMap::registered_gpus() const {
  std::shared_lock lock(mutex_);
  std::vector<GpuId> out;
  for (const auto& n : nodes_) {
    if (n.alive) out.push_back(n.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t PerfMap::require_index(const GpuId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UnknownGpu(id);
  return it->second;
}

void PerfMap::publish_locked(const PerfKey& key, double value, double now) {
  Node& node = nodes_[require_index(key.gpu)];
  const Slot slot{value, now, true};
  switch (key.kind) {
    case PerfKey::Kind::kLayerLatency:
      if (key.layer < 1 || key.layer > layers_) {
        throw InputError("layer out of range in " + key.to_string());
      }
      node.tau[key.layer - 1] = slot;
      break;
    case PerfKey::Kind::kLinkRtt: {
      const std::size_t peer = require_index(key.peer);
      if (node.rho.size() <= peer) node.rho.resize(nodes_.size());
      node.rho[peer] = slot;
      break;
    }
    case PerfKey::Kind::kNodeAttr:
      node.attr = slot;
      break;
  }
}

void PerfMap::publish(const PerfKey& key, double value, double now) {
  std::unique_lock lock(mutex_);
  publish_locked(key, value, now);
}

std::optional<double> PerfMap::read(const PerfKey& key, double now) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(key.gpu);
  if (it == index_.end()) return std::nullopt;
  const Node& node = nodes_[it->second];
  switch (key.kind) {
    case PerfKey::Kind::kLayerLatency:
      if (key.layer < 1 || key.layer > layers_) return std::nullopt;
      return live(node.tau[key.layer - 1], now);
    case PerfKey::Kind::kLinkRtt: {
      auto peer = index_.find(key.peer);
      if (peer == index_.end() || peer->second >= node.rho.size()) {
        return std::nullopt;
      }
      return live(node.rho[peer->second], now);
    }
    case PerfKey::Kind::kNodeAttr:
      return live(node.attr, now);
  }
  return std::nullopt;
}

void PerfMap::set_base_latency(const GpuId& id, int first_layer,
                               int last_layer, double seconds) {
  std::unique_lock lock(mutex_);
  Node& node = nodes_[require_index(id)];
  first_layer = std::max(first_layer, 1);
  last_layer = std::min(last_layer, layers_);
  for (int l = first_layer; l <= last_layer; ++l) {
    node.base_tau[l - 1] = seconds;
    if (seconds <= 0.0) node.tau[l - 1] = Slot{};
  }
}

void PerfMap::republish_locked(Node& node, double now,
                               std::vector<std::pair<PerfKey, double>>* out) {
  const double factor = config_.latency.slowdown(node.occupancy);
  for (int l = 1; l <= layers_; ++l) {
    const double base = node.base_tau[l - 1];
    if (base <= 0.0) continue;
    const double value = base * factor;
    node.tau[l - 1] = Slot{value, now, true};
    if (out) out->emplace_back(PerfKey::layer_latency(node.id, l), value);
  }
}

std::vector<std::pair<PerfKey, double>> PerfMap::on_chain_event(
    const PipelineChain& chain, ChainEvent event, double now) {
  std::unique_lock lock(mutex_);
  const std::vector<GpuId> gpus = chain.gpus();
  std::vector<std::size_t> indices;
  for (const auto& id : gpus) indices.push_back(require_index(id));
  if (event == ChainEvent::kRelease) {
    for (std::size_t i : indices) {
      if (nodes_[i].occupancy <= 0) {
        throw Error("release without matching select on " + nodes_[i].id);
      }
    }
  }
  std::vector<std::pair<PerfKey, double>> published;
  for (std::size_t i : indices) {
    nodes_[i].occupancy += event == ChainEvent::kSelect ? 1 : -1;
    republish_locked(nodes_[i], now, &published);
  }
  return published;
}

int PerfMap::occupancy(const GpuId& id) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(id);
  return it == index_.end() ? 0 : nodes_[it->second].occupancy;
}

void PerfMap::refresh_latency(const GpuId& id, double now) {
  std::unique_lock lock(mutex_);
  republish_locked(nodes_[require_index(id)], now, nullptr);
}

std::vector<DumpRecord> PerfMap::dump(double now) const {
  std::shared_lock lock(mutex_);
  std::vector<DumpRecord> out;
  auto emit = [&](PerfKey key, const Slot& slot) {
    if (live(slot, now)) {
      out.push_back({std::move(key), slot.value, now - slot.published_at});
    }
  };
  for (const auto& node : nodes_) {
    if (!node.alive) continue;
    emit(PerfKey::node_attr(node.id), node.attr);
    for (int l = 1; l <= layers_; ++l) {
      emit(PerfKey::layer_latency(node.id, l), node.tau[l - 1]);
    }
    for (std::size_t p = 0; p < node.rho.size(); ++p) {
      if (p < nodes_.size() && nodes_[p].alive) {
        emit(PerfKey::link_rtt(node.id, nodes_[p].id), node.rho[p]);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const DumpRecord& a, const DumpRecord& b) {
    return a.key < b.key;
  });
  return out;
}

std::vector<LayerLoad> layer_loads(int layers,
                                   std::span<const LayerSlice> placement,
                                   const std::map<GpuId, GpuUsage>& usage,
                                   double total_memory, double total_flops,
                                   double mix_alpha) {
  std::vector<LayerLoad> out(static_cast<std::size_t>(std::max(layers, 0)));
  std::vector<double> kv(out.size(), 0.0);
  std::vector<double> compute(out.size(), 0.0);
  for (const auto& slice : placement) {
    auto it = usage.find(slice.gpu_id);
    if (it == usage.end()) continue;
    for (int l = std::max(slice.start_layer, 1);
         l <= std::min(slice.end_layer, layers); ++l) {
      kv[l - 1] += it->second.kv_tokens;
      compute[l - 1] += it->second.compute_flops;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].layer = static_cast<int>(i) + 1;
    out[i].mix_alpha = mix_alpha;
    out[i].kv_fraction = total_memory > 0.0 ? kv[i] / total_memory : 0.0;
    out[i].compute_fraction =
        total_flops > 0.0 ? compute[i] / total_flops : 0.0;
  }
  return out;
}

double layer_load_cov(std::span<const double> loads) {
  if (loads.empty()) return 0.0;
  double mean = 0.0;
  for (double v : loads) mean += v;
  mean /= static_cast<double>(loads.size());
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : loads) var += (v - mean) * (v - mean);
  var /= static_cast<double>(loads.size());
  return std::sqrt(var) / mean;
}

double layer_load_cov(std::span<const LayerLoad> loads) {
  std::vector<double> values;
  values.reserve(loads.size());
  for (const auto& l : loads) values.push_back(l.load());
  return layer_load_cov(values);
}

}  // namespace decserve
