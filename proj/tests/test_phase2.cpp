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

#include <vector>

#include "decserve/errors.hpp"
#include "decserve/phase2.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace decserve;

namespace {

struct Fixture {
  explicit Fixture(int layers, std::vector<LayerSlice> slices)
      : perf(layers), placement(std::move(slices)) {
    for (const auto& s : placement) {
      if (!perf.is_registered(s.gpu_id)) perf.register_gpu(s.gpu_id);
    }
  }
  void tau(const GpuId& g, int layer, double v) {
    perf.publish(PerfKey::layer_latency(g, layer), v, 0.0);
  }
  void rho(const GpuId& a, const GpuId& b, double v) {
    perf.publish(PerfKey::link_rtt(a, b), v, 0.0);
  }
  void rho_all(double v) {
    for (const auto& x : placement) {
      for (const auto& y : placement) {
        if (x.gpu_id != y.gpu_id) rho(x.gpu_id, y.gpu_id, v);
      }
    }
  }
  LayerDag dag(double now = 0.0) {
    return perf.with_snapshot(
        now, [&](const PerfView& v) { return build_dag(placement, v); });
  }

  PerfMap perf;
  std::vector<LayerSlice> placement;
};

}  // namespace

TEST_CASE("single path") {
  Fixture f(2, {{"a", 1, 1}, {"b", 2, 2}});
  f.tau("a", 1, 0.002);
  f.tau("b", 2, 0.003);
  f.rho("a", "b", 0.001);
  const auto dag = f.dag();
  CHECK(dag.node_count() == 2);
  CHECK(dag.edge_count() == 1);
  const auto chain = select_chain(dag);
  CHECK(chain.predicted_latency == doctest::Approx(0.006));
  CHECK(chain.hops == std::vector<ChainHop>{{"a", 1, 1}, {"b", 2, 2}});
}

TEST_CASE("two aligned replicas: the cheap first stage then the cheap second") {
  // Layers 1..2 form stage one and 3..4 stage two; per-stage tau sums are
  // A=[2,9] and B=[5,3].
  Fixture f(4, {{"A1", 1, 2}, {"A2", 3, 4}, {"B1", 1, 2}, {"B2", 3, 4}});
  f.tau("A1", 1, 1);
  f.tau("A1", 2, 1);
  f.tau("A2", 3, 4.5);
  f.tau("A2", 4, 4.5);
  f.tau("B1", 1, 2.5);
  f.tau("B1", 2, 2.5);
  f.tau("B2", 3, 1.5);
  f.tau("B2", 4, 1.5);
  f.rho_all(1.0);
  f.rho("A1", "A2", 0.0);
  f.rho("B1", "B2", 0.0);
  const auto dag = f.dag();
  CHECK(dag.node_count() == 8);
  // Every layer transition joins both replicas to both replicas.
  CHECK(dag.edge_count() == 3 * 4);
  CHECK(dag.avg_replicas() == doctest::Approx(2.0));
  SweepStats stats;
  const auto chain = select_chain(dag, &stats);
  CHECK(chain.predicted_latency == doctest::Approx(6.0));
  CHECK(chain.hops == std::vector<ChainHop>{{"A1", 1, 2}, {"B2", 3, 4}});
  CHECK(stats.relaxations == dag.edge_count());
}

TEST_CASE("zero link cost decouples the stages") {
  Fixture f(6, {{"a1", 1, 3}, {"a2", 4, 6}, {"b1", 1, 3}, {"b2", 4, 6}});
  for (int l = 1; l <= 3; ++l) {
    f.tau("a1", l, 2);
    f.tau("b1", l, 1);
  }
  for (int l = 4; l <= 6; ++l) {
    f.tau("a2", l, 1);
    f.tau("b2", l, 3);
  }
  f.rho_all(0.0);
  const auto chain = select_chain(f.dag());
  CHECK(chain.hops == std::vector<ChainHop>{{"b1", 1, 3}, {"a2", 4, 6}});
  CHECK(chain.predicted_latency == 6.0);
}

TEST_CASE("expired and missing entries") {
  Fixture f(4, {{"a", 1, 4}, {"b", 1, 4}});
  for (int l = 1; l <= 4; ++l) f.tau("a", l, 1.0);
  for (int l = 1; l <= 4; ++l) {
    f.perf.publish(PerfKey::layer_latency("b", l), 1.0, l == 3 ? -100.0 : 0.0);
  }
  f.rho_all(0.5);
  auto dag = f.dag();
  CHECK(dag.node_count() == 7);
  CHECK(dag.layers[2].size() == 1);

  // The sole replica of layer 3 expired: no DAG.
  Fixture g(4, {{"a", 1, 2}, {"b", 3, 4}});
  g.tau("a", 1, 1);
  g.tau("a", 2, 1);
  g.perf.publish(PerfKey::layer_latency("b", 3), 1.0, -100.0);
  g.tau("b", 4, 1);
  g.rho_all(0.1);
  try {
    g.dag();
    FAIL("expected UncoveredLayer");
  } catch (const UncoveredLayer& e) {
    CHECK(e.layer() == 3);
  }

  // Covered but no live link between the two halves.
  Fixture h(2, {{"a", 1, 1}, {"b", 2, 2}});
  h.tau("a", 1, 1);
  h.tau("b", 2, 1);
  CHECK_THROWS_AS(select_chain(h.dag()), NoPath);
}

TEST_CASE("ties resolve to the lexicographically smaller gpu") {
  Fixture f(2, {{"m", 1, 2}, {"c", 1, 2}, {"x", 1, 2}});
  for (const char* g : {"m", "c", "x"}) {
    f.tau(g, 1, 1);
    f.tau(g, 2, 1);
  }
  f.rho_all(1.0);
  const auto chain = select_chain(f.dag());
  CHECK(chain.hops == std::vector<ChainHop>{{"c", 1, 2}});
}

TEST_CASE("select_chain equals brute force") {
  const auto r = testing::check_phase2_oracle(300, 21);
  INFO(r.first_failure);
  CHECK(r.ok());
}

TEST_CASE("router: two idle pipelines take one request each") {
  Fixture f(4, {{"a1", 1, 2}, {"a2", 3, 4}, {"b1", 1, 2}, {"b2", 3, 4}});
  for (const auto& s : f.placement) {
    f.perf.set_base_latency(s.gpu_id, s.start_layer, s.end_layer, 0.01);
    f.perf.refresh_latency(s.gpu_id, 0.0);
  }
  f.rho_all(0.05);
  f.rho("a1", "a2", 0.001);
  f.rho("b1", "b2", 0.001);
  Router router(f.perf);
  const auto first = router.route_request("s1", f.placement, 0.0);
  const auto second = router.route_request("s2", f.placement, 0.0);
  CHECK(first.gpus() == std::vector<GpuId>{"a1", "a2"});
  CHECK(second.gpus() == std::vector<GpuId>{"b1", "b2"});
  CHECK(router.active_sessions() == 2);
  CHECK(router.sessions_on("a2") == std::vector<std::string>{"s1"});

  // Release then re-route gives back the same chain.
  CHECK(router.release("s1", 0.0));
  CHECK_FALSE(router.release("s1", 0.0));
  const auto again = router.route_request("s3", f.placement, 0.0);
  CHECK(again.hops == first.hops);
}

TEST_CASE("router: a saturated pipeline is avoided") {
  Fixture f(2, {{"a", 1, 2}, {"b", 1, 2}});
  f.perf.set_base_latency("a", 1, 2, 0.001);
  f.perf.refresh_latency("a", 0.0);
  f.perf.set_base_latency("b", 1, 2, 0.002);
  f.perf.refresh_latency("b", 0.0);
  f.rho_all(0.0);
  PipelineChain busy;
  busy.hops = {{"a", 1, 2}};
  for (int i = 0; i < 5; ++i) {
    f.perf.on_chain_event(busy, PerfMap::ChainEvent::kSelect, 0.0);
  }
  Router router(f.perf);
  CHECK(router.route_request("s", f.placement, 0.0).gpus() ==
        std::vector<GpuId>{"b"});
}

TEST_CASE("router: admit filter keeps gpus out") {
  Fixture f(2, {{"a", 1, 2}, {"b", 1, 2}});
  f.perf.set_base_latency("a", 1, 2, 0.001);
  f.perf.refresh_latency("a", 0.0);
  f.perf.set_base_latency("b", 1, 2, 0.002);
  f.perf.refresh_latency("b", 0.0);
  f.rho_all(0.0);
  Router router(f.perf);
  const auto chain = router.route_request(
      "s", f.placement, 0.0, [](const GpuId& g) { return g != "a"; });
  CHECK(chain.gpus() == std::vector<GpuId>{"b"});
  CHECK_THROWS_AS(router.route_request("t", f.placement, 0.0,
                                       [](const GpuId&) { return false; }),
                  UncoveredLayer);
}

TEST_CASE("sessions split evenly across equal pipelines") {
  const auto r = testing::prop_load_deflection(300, 3);
  INFO(r.first_failure);
  CHECK(r.ok());
}

TEST_CASE("relaxations scale with L times replicas squared") {
  for (int replicas = 1; replicas <= 6; ++replicas) {
    const int layers = 24;
    std::vector<LayerSlice> slices;
    for (int r = 0; r < replicas; ++r) {
      slices.push_back({"g" + std::to_string(r) + "a", 1, 12});
      slices.push_back({"g" + std::to_string(r) + "b", 13, 24});
    }
    Fixture f(layers, slices);
    for (const auto& s : slices) {
      f.perf.set_base_latency(s.gpu_id, s.start_layer, s.end_layer, 0.001);
      f.perf.refresh_latency(s.gpu_id, 0.0);
    }
    f.rho_all(0.001);
    SweepStats stats;
    select_chain(f.dag(), &stats);
    const double predicted = layers * replicas * replicas;
    CHECK(stats.relaxations <= predicted);
    CHECK(stats.relaxations >= predicted / 2.0);
  }
}
