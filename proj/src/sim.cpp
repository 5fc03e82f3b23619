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

#include "decserve/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "decserve/errors.hpp"
#include "decserve/phase2.hpp"

namespace decserve {

double percentile(std::span<const double> latencies, double p) {
  if (latencies.empty()) throw EmptySample();
  std::vector<double> sorted(latencies.begin(), latencies.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<long long>(std::ceil(p * n / 100.0 - 1e-9));
  rank = std::clamp<long long>(rank, 1, static_cast<long long>(sorted.size()));
  return sorted[static_cast<std::size_t>(rank - 1)];
}

namespace {

double chain_rtt(const PipelineChain& chain, const ClusterSnapshot& cluster) {
  double total = 0.0;
  for (std::size_t i = 1; i < chain.hops.size(); ++i) {
    total += cluster.rtt(chain.hops[i - 1].gpu_id, chain.hops[i].gpu_id);
  }
  return total;
}

double hop_base(const ChainHop& hop, const ClusterSnapshot& cluster,
                const ModelSpec& model) {
  const GpuNode* gpu = cluster.find(hop.gpu_id);
  if (!gpu) throw UnknownGpu(hop.gpu_id);
  return hop.length() * LatencyModel::base_layer_time(*gpu, model);
}

}  // namespace

double closed_form_latency(const PipelineChain& chain,
                           const ClusterSnapshot& cluster,
                           const ModelSpec& model, const Request& request,
                           const LatencyModel& latency) {
  double compute = 0.0;
  for (const auto& hop : chain.hops) compute += hop_base(hop, cluster, model);
  const double rtt = chain_rtt(chain, cluster);
  const double prefill = compute * request.prompt_tokens + rtt;
  const double step = compute + (latency.amortize_rtt ? 0.0 : rtt);
  return prefill + step * request.output_tokens;
}

namespace {

class Simulation {
 public:
  Simulation(const AllocationPlan& plan, const ClusterSnapshot& cluster,
             const ModelSpec& model, std::span<const Request> trace,
             std::span<const MembershipEvent> events, std::uint64_t seed,
             const SimConfig& config)
      : trace_(trace),
        events_(events),
        config_(config),
        perf_(model.layer_count, config.perf),
        manager_(cluster, model, plan, perf_, config.membership),
        router_(perf_),
        rng_(seed) {}

  MetricsReport run() {
    manager_.bootstrap(0.0);
    std::uniform_real_distribution<double> phase(
        0.0, config_.perf.publish_interval_s);
    for (const auto& gpu : manager_.cluster().gpus) {
      push(phase(rng_), Kind::kPublish, 0, gpu.id);
    }
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      push(trace_[i].arrival_time, Kind::kArrival, i);
    }
    for (std::size_t i = 0; i < events_.size(); ++i) {
      push(events_[i].at, Kind::kMembership, i);
    }
    pending_arrivals_ = trace_.size();
    pending_membership_ = events_.size();

    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.at;
      switch (ev.kind) {
        case Kind::kArrival:
          --pending_arrivals_;
          start(ev.index);
          break;
        case Kind::kStep:
          step(ev.index, ev.generation);
          break;
        case Kind::kMembership:
          --pending_membership_;
          membership(events_[ev.index]);
          break;
        case Kind::kPublish:
          publish(ev.gpu);
          break;
      }
    }
    return report();
  }

 private:
  enum class Kind { kArrival, kStep, kMembership, kPublish };

  struct Event {
    double at;
    std::uint64_t seq;
    Kind kind;
    std::size_t index;
    std::uint64_t generation;
    GpuId gpu;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.seq > b.seq;
    }
  };
  struct Active {
    PipelineChain chain;
    int steps_done = 0;
    std::uint64_t generation = 0;
  };
  struct Busy {
    int occupancy = 0;
    double since = 0.0;
    double total = 0.0;
  };

  void push(double at, Kind kind, std::size_t index, GpuId gpu = {},
            std::uint64_t generation = 0) {
    queue_.push({at, next_seq_++, kind, index, generation, std::move(gpu)});
  }

  bool work_pending() const {
    return pending_arrivals_ > 0 || pending_membership_ > 0 || !active_.empty();
  }

  int tokens(std::size_t index) const {
    return trace_[index].prompt_tokens + trace_[index].output_tokens;
  }

  void occupy(const PipelineChain& chain, std::size_t index, int sign) {
    for (const auto& id : chain.gpus()) {
      kv_used_[id] += sign * tokens(index);
      Busy& b = busy_[id];
      if (sign > 0 && b.occupancy++ == 0) b.since = now_;
      if (sign < 0 && --b.occupancy == 0) b.total += now_ - b.since;
    }
    sync_usage();
  }

  void sync_usage() {
    std::map<GpuId, GpuUsage> usage;
    for (const auto& gpu : manager_.cluster().gpus) {
      GpuUsage u;
      u.kv_tokens = static_cast<double>(kv_used_[gpu.id]);
      u.compute_flops = busy_[gpu.id].occupancy > 0 ? gpu.flops : 0.0;
      usage.emplace(gpu.id, u);
    }
    manager_.set_usage(std::move(usage));
  }

  std::optional<PipelineChain> route(std::size_t index) {
    const Request& r = trace_[index];
    const int need = tokens(index);
    const ClusterSnapshot& cluster = manager_.cluster();
    GpuFilter admit;
    if (config_.enforce_kv_capacity) {
      admit = [&](const GpuId& id) {
        const GpuNode* gpu = cluster.find(id);
        if (!gpu || gpu->ram_token_capacity <= 0) return true;
        return kv_used_[id] + need <= gpu->ram_token_capacity;
      };
    }
    try {
      return router_.route_request(r.id, manager_.placement(), now_, admit);
    } catch (const UncoveredLayer&) {
    } catch (const NoPath&) {
    }
    return std::nullopt;
  }

  void start(std::size_t index) {
    std::optional<PipelineChain> chain = route(index);
    if (!chain && !manager_.uncovered_layers().empty()) {
      // Nothing hosts some layer: rebalance before giving up on the request.
      note("request " + trace_[index].id + " found an uncovered layer");
      rebalance();
      chain = route(index);
    }
    if (!chain) {
      ++rejected_;
      return;
    }
    occupy(*chain, index, +1);
    Active& a = active_[index];
    a.chain = std::move(*chain);
    a.steps_done = 0;
    a.generation = ++generation_;

    const ClusterSnapshot& cluster = manager_.cluster();
    double compute = 0.0;
    for (const auto& hop : a.chain.hops) {
      compute += hop_base(hop, cluster, manager_.model());
    }
    const double prefill =
        compute * trace_[index].prompt_tokens + chain_rtt(a.chain, cluster);
    push(now_ + prefill, Kind::kStep, index, {}, a.generation);
  }

  void step(std::size_t index, std::uint64_t generation) {
    auto it = active_.find(index);
    if (it == active_.end() || it->second.generation != generation) return;
    Active& a = it->second;
    if (a.steps_done >= trace_[index].output_tokens) {
      finish(index);
      return;
    }
    const ClusterSnapshot& cluster = manager_.cluster();
    const LatencyModel& latency = config_.perf.latency;
    double duration = 0.0;
    for (const auto& hop : a.chain.hops) {
      // Others sharing the GPU slow this request down; it does not slow
      // itself.
      const int others = std::max(busy_[hop.gpu_id].occupancy - 1, 0);
      duration += hop_base(hop, cluster, manager_.model()) *
                  latency.slowdown(others);
    }
    if (!latency.amortize_rtt) duration += chain_rtt(a.chain, cluster);
    ++a.steps_done;
    push(now_ + duration, Kind::kStep, index, {}, a.generation);
  }

  void finish(std::size_t index) {
    Active& a = active_.at(index);
    const Request& r = trace_[index];
    outcomes_.push_back({r.id, r.arrival_time, now_ - r.arrival_time,
                         closed_form_latency(a.chain, manager_.cluster(),
                                             manager_.model(), r,
                                             config_.perf.latency)});
    router_.release(r.id, now_);
    occupy(a.chain, index, -1);
    active_.erase(index);
    latencies_.push_back(now_ - r.arrival_time);
    first_arrival_ = std::min(first_arrival_, r.arrival_time);
    last_completion_ = std::max(last_completion_, now_);
  }

  // Drops the chain of a request without completing it.
  void abort(std::size_t index) {
    auto it = active_.find(index);
    if (it == active_.end()) return;
    router_.release(trace_[index].id, now_);
    occupy(it->second.chain, index, -1);
    active_.erase(it);
  }

  std::vector<std::size_t> requests_on(const std::vector<GpuId>& gpus) const {
    std::vector<std::size_t> out;
    for (const auto& [index, a] : active_) {
      const auto on = a.chain.gpus();
      if (std::any_of(on.begin(), on.end(), [&](const GpuId& g) {
            return std::find(gpus.begin(), gpus.end(), g) != gpus.end();
          })) {
        out.push_back(index);
      }
    }
    return out;
  }

  void note(std::string what) { records_.push_back({now_, std::move(what)}); }

  // Returns requests that lost their chain because their GPUs reloaded.
  std::vector<std::size_t> rebalance() {
    std::vector<std::size_t> aborted;
    try {
      RebalanceDiff diff = manager_.global_rebalance(now_);
      std::vector<GpuId> touched = diff.reload;
      touched.insert(touched.end(), diff.evict.begin(), diff.evict.end());
      aborted = requests_on(touched);
      for (std::size_t index : aborted) abort(index);
      std::ostringstream os;
      os << "global rebalance: " << diff.reload.size() << " reload, "
         << diff.evict.size() << " evict";
      note(os.str());
    } catch (const NoFeasiblePipeline&) {
      note("global rebalance failed: cluster degraded");
    }
    return aborted;
  }

  void membership(const MembershipEvent& event) {
    std::vector<std::size_t> restart;
    if (event.kind == MembershipEvent::Kind::kJoin) {
      try {
        LayerSlice s = manager_.on_join(event.gpu, now_);
        note("join " + s.gpu_id + " [" + std::to_string(s.start_layer) + "," +
             std::to_string(s.end_layer) + "]");
        push(now_ + config_.perf.publish_interval_s, Kind::kPublish, 0,
             event.gpu.id);
      } catch (const ZeroCapacity& e) {
        note(e.what());
      } catch (const DuplicateGpuId& e) {
        note(e.what());
        return;
      }
      sync_usage();
      RebalanceDecision d = manager_.evaluate_triggers();
      if (d.action == RebalanceAction::kGlobal) {
        note(std::string("trigger ") + to_string(d.reason));
        restart = rebalance();
      }
    } else {
      if (!manager_.cluster().find(event.gpu_id)) {
        note("leave of unknown gpu " + event.gpu_id);
        return;
      }
      restart = requests_on({event.gpu_id});
      for (std::size_t index : restart) abort(index);
      RebalanceDecision d = manager_.on_leave(event.gpu_id, now_);
      busy_.erase(event.gpu_id);
      kv_used_.erase(event.gpu_id);
      sync_usage();
      note("leave " + event.gpu_id + " -> " + to_string(d.action) + " (" +
           to_string(d.reason) + ")");
      if (d.action == RebalanceAction::kGlobal) {
        auto more = rebalance();
        restart.insert(restart.end(), more.begin(), more.end());
      }
    }
    std::sort(restart.begin(), restart.end());
    for (std::size_t index : restart) start(index);
  }

  void publish(const GpuId& id) {
    if (!manager_.cluster().find(id)) return;
    manager_.publish(id, now_);
    if (work_pending()) {
      push(now_ + config_.perf.publish_interval_s, Kind::kPublish, 0, id);
    }
  }

  MetricsReport report() {
    MetricsReport m;
    m.total = trace_.size();
    m.completed = latencies_.size();
    m.rejected = rejected_;
    m.in_flight = active_.size();
    m.events = records_;
    m.requests = outcomes_;
    if (!latencies_.empty()) {
      m.duration_s = last_completion_ - first_arrival_;
      m.throughput_rps =
          m.duration_s > 0.0 ? static_cast<double>(m.completed) / m.duration_s
                             : 0.0;
      m.latency_avg =
          std::accumulate(latencies_.begin(), latencies_.end(), 0.0) /
          static_cast<double>(latencies_.size());
      m.latency_p95 = percentile(latencies_, 95);
      m.latency_p99 = percentile(latencies_, 99);
      m.latency_p100 = percentile(latencies_, 100);
    }
    std::set<GpuId> gpus;
    for (const auto& [id, b] : busy_) gpus.insert(id);
    for (const auto& g : manager_.cluster().gpus) gpus.insert(g.id);
    for (const auto& id : gpus) {
      const Busy& b = busy_[id];
      double total = b.total;
      if (b.occupancy > 0) total += now_ - b.since;
      m.per_gpu_utilization[id] =
          m.duration_s > 0.0 ? std::min(total / m.duration_s, 1.0) : 0.0;
    }
    return m;
  }

  std::span<const Request> trace_;
  std::span<const MembershipEvent> events_;
  SimConfig config_;
  PerfMap perf_;
  MembershipManager manager_;
  Router router_;
  std::mt19937_64 rng_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t generation_ = 0;
  double now_ = 0.0;
  std::size_t pending_arrivals_ = 0;
  std::size_t pending_membership_ = 0;

  std::map<std::size_t, Active> active_;
  std::map<GpuId, long long> kv_used_;
  std::map<GpuId, Busy> busy_;
  std::vector<double> latencies_;
  std::vector<RequestOutcome> outcomes_;
  std::vector<SimEventRecord> records_;
  std::size_t rejected_ = 0;
  double first_arrival_ = std::numeric_limits<double>::infinity();
  double last_completion_ = 0.0;
};

}  // namespace

MetricsReport run_simulation(const AllocationPlan& plan,
                             const ClusterSnapshot& cluster,
                             const ModelSpec& model,
                             std::span<const Request> trace,
                             std::span<const MembershipEvent> events,
                             std::uint64_t seed, const SimConfig& config) {
  validate_model(model);
  require_valid(cluster);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].arrival_time < trace[i - 1].arrival_time) {
      throw InputError("trace must be sorted by arrival time");
    }
  }
  return Simulation(plan, cluster, model, trace, events, seed, config).run();
}

AllocationPlan baseline_plan(const ClusterSnapshot& cluster,
                             const ModelSpec& model) {
  validate_model(model);
  const int layers = model.layer_count;
  std::vector<std::pair<int, const GpuNode*>> ranked;
  for (const auto& g : cluster.gpus) {
    const int c = layer_capacity(g, model);
    if (c > 0) ranked.emplace_back(c, &g);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });

  AllocationPlan plan;
  std::size_t next = 0;
  while (next < ranked.size()) {
    std::size_t end = next;
    long long sum = 0;
    while (end < ranked.size() && sum < layers) sum += ranked[end++].first;
    if (sum < layers) break;

    const int stages = static_cast<int>(end - next);
    std::vector<int> lengths(static_cast<std::size_t>(stages));
    int left = layers;
    for (int i = 0; i < stages; ++i) {
      const int even = layers / stages + (i < layers % stages ? 1 : 0);
      lengths[i] = std::min(even, ranked[next + i].first);
      left -= lengths[i];
    }
    for (int i = 0; i < stages && left > 0; ++i) {
      const int room = ranked[next + i].first - lengths[i];
      const int add = std::min(room, left);
      lengths[i] += add;
      left -= add;
    }

    Pipeline p;
    p.region = ranked[next].second->region;
    int cursor = 1;
    for (int i = 0; i < stages; ++i) {
      p.stages.push_back({ranked[next + i].second->id, cursor,
                          cursor + lengths[i] - 1});
      cursor += lengths[i];
    }
    plan.pipelines.push_back(std::move(p));
    plan.stage_total += stages;
    next = end;
  }
  if (plan.pipelines.empty()) throw NoFeasiblePipeline();
  plan.replication_count = static_cast<int>(plan.pipelines.size());
  return plan;
}

}  // namespace decserve
