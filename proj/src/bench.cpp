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

#include "decserve/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <random>

#include "decserve/perf_map.hpp"
#include "decserve/phase2.hpp"

namespace decserve {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since)
      .count();
}

}  // namespace

ModelSpec bench_model(int layers) {
  ModelSpec m;
  m.name = "bench";
  m.layer_count = layers;
  m.bytes_per_layer = 1e9;
  m.flops_per_layer_per_token = 1e9;
  return m;
}

ClusterSnapshot bench_cluster(int gpus, const ModelSpec& model,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<unsigned>(gpus)));
  std::uniform_int_distribution<int> regions_dist(2, 4);
  std::uniform_int_distribution<int> capacity(4, 32);
  std::uniform_real_distribution<double> flops(1e12, 4e12);
  std::uniform_real_distribution<double> link_ms(0.5, 5.0);

  ClusterSnapshot c;
  // Small clusters get fewer regions so that every region can host a copy.
  const int regions = std::min(regions_dist(rng), std::max(1, gpus / 8));
  for (int r = 0; r < regions; ++r) c.regions.insert("region" + std::to_string(r));
  std::vector<int> caps(static_cast<std::size_t>(gpus));
  for (int r = 0; r < regions; ++r) {
    long long sum = 0;
    while (sum < model.layer_count) {
      sum = 0;
      for (int i = r; i < gpus; i += regions) sum += caps[i] = capacity(rng);
    }
  }
  for (int i = 0; i < gpus; ++i) {
    GpuNode g;
    char id[16];
    std::snprintf(id, sizeof id, "g%03d", i);
    g.id = id;
    g.region = "region" + std::to_string(i % regions);
    g.reserve_fraction = 0.0;
    g.vram_bytes = caps[i] * model.bytes_per_layer;
    g.flops = flops(rng);
    c.gpus.push_back(std::move(g));
  }
  for (int i = 0; i < gpus; ++i) {
    for (int j = i + 1; j < gpus; ++j) {
      if (c.gpus[i].region == c.gpus[j].region) {
        c.links[{c.gpus[i].id, c.gpus[j].id}] = link_ms(rng) / 1000.0;
      }
    }
  }
  return c;
}

BenchPoint bench_point(int gpus, const BenchOptions& options) {
  const ModelSpec model = bench_model(options.layers);
  const ClusterSnapshot cluster = bench_cluster(gpus, model, options.seed);
  BenchPoint p;
  p.gpus = gpus;
  p.regions = static_cast<int>(cluster.regions.size());

  auto start = Clock::now();
  const AllocationPlan plan = allocate(cluster, model, options.allocator);
  p.phase1_ms = elapsed_ms(start);
  p.replicas = plan.replication_count;

  PerfMap perf(model.layer_count);
  for (const auto& g : cluster.gpus) perf.register_gpu(g.id);
  for (const auto& s : plan.slices()) {
    perf.set_base_latency(s.gpu_id, s.start_layer, s.end_layer,
                          model.flops_per_layer_per_token /
                              cluster.find(s.gpu_id)->flops);
  }
  for (const auto& a : cluster.gpus) {
    perf.refresh_latency(a.id, 0.0);
    for (const auto& b : cluster.gpus) {
      if (a.id != b.id) {
        perf.publish(PerfKey::link_rtt(a.id, b.id), cluster.rtt(a.id, b.id),
                     0.0);
      }
    }
  }

  const std::vector<LayerSlice> placement = plan.slices();
  p.avg_replicas = build_dag(plan, perf, 0.0).avg_replicas();
  p.predicted_edges =
      (options.layers - 1) * p.avg_replicas * p.avg_replicas;

  Router router(perf);
  SweepStats stats;
  p.routings = options.routings;
  start = Clock::now();
  for (int i = 0; i < options.routings; ++i) {
    const std::string session = "s" + std::to_string(i);
    router.route_request(session, placement, 0.0, {}, &stats);
    router.release(session, 0.0);
  }
  p.phase2_ms_per_req = elapsed_ms(start) / options.routings;
  p.edges_per_route =
      static_cast<double>(stats.relaxations) / options.routings;
  return p;
}

std::vector<BenchPoint> run_bench(const BenchOptions& options) {
  std::vector<BenchPoint> out;
  for (int n : options.gpu_counts) out.push_back(bench_point(n, options));
  return out;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchPoint>& points) {
  out << "gpus,regions,replicas,phase1_ms,phase2_ms_per_req,routings,"
         "avg_replicas,edges_per_route,predicted_edges\n";
  for (const auto& p : points) {
    out << p.gpus << ',' << p.regions << ',' << p.replicas << ','
        << p.phase1_ms << ',' << p.phase2_ms_per_req << ',' << p.routings
        << ',' << p.avg_replicas << ',' << p.edges_per_route << ','
        << p.predicted_edges << '\n';
  }
}

}  // namespace decserve
