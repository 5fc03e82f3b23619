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

#include <map>
#include <vector>

#include "decserve/errors.hpp"
#include "decserve/perf_map.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace decserve;

namespace {

PerfMapConfig ttl6() {
  PerfMapConfig c;
  c.publish_interval_s = 2.0;
  c.ttl_multiplier = 3.0;
  return c;
}

}  // namespace

TEST_CASE("publish and read") {
  PerfMap perf(8, ttl6());
  perf.register_gpu("g1");
  const auto key = PerfKey::layer_latency("g1", 5);
  perf.publish(key, 0.002, 10.0);
  CHECK(perf.read(key, 11.0) == 0.002);
  perf.publish(key, 0.003, 12.0);
  CHECK(perf.read(key, 12.5) == 0.003);
  CHECK_THROWS_AS(perf.publish(PerfKey::layer_latency("gX", 1), 1.0, 0.0),
                  UnknownGpu);
  CHECK_THROWS_AS(perf.publish(PerfKey::layer_latency("g1", 9), 1.0, 0.0),
                  InputError);
  CHECK_THROWS_AS(perf.register_gpu("g1"), DuplicateGpuId);
}

TEST_CASE("entries expire after the ttl") {
  PerfMap perf(4, ttl6());
  perf.register_gpu("g1");
  perf.register_gpu("g2");
  const auto key = PerfKey::link_rtt("g1", "g2");
  perf.publish(key, 0.01, 10.0);
  CHECK(perf.read(key, 15.0) == 0.01);
  CHECK(perf.read(key, 16.0) == 0.01);
  CHECK_FALSE(perf.read(key, 17.0));
  CHECK_FALSE(perf.read(PerfKey::node_attr("g1"), 10.0));
}

TEST_CASE("withdraw drops every key naming the gpu") {
  PerfMap perf(4, ttl6());
  perf.register_gpu("a");
  perf.register_gpu("b");
  perf.publish(PerfKey::layer_latency("a", 1), 1.0, 0.0);
  perf.publish(PerfKey::link_rtt("b", "a"), 1.0, 0.0);
  perf.publish(PerfKey::link_rtt("a", "b"), 1.0, 0.0);
  perf.withdraw("a");
  CHECK_FALSE(perf.is_registered("a"));
  CHECK_FALSE(perf.read(PerfKey::layer_latency("a", 1), 0.0));
  CHECK_FALSE(perf.read(PerfKey::link_rtt("b", "a"), 0.0));
  CHECK_THROWS_AS(perf.publish(PerfKey::layer_latency("a", 1), 1.0, 0.0),
                  UnknownGpu);
  // Rejoining starts clean.
  perf.register_gpu("a");
  CHECK_FALSE(perf.read(PerfKey::layer_latency("a", 1), 0.0));
}

TEST_CASE("perf keys round-trip through text") {
  for (const auto& k : {PerfKey::layer_latency("g-1", 12),
                        PerfKey::link_rtt("a", "b"), PerfKey::node_attr("x")}) {
    CHECK(PerfKey::parse(k.to_string()) == k);
  }
  CHECK(PerfKey::layer_latency("g", 3).to_string() == "tau/g/3");
  CHECK_THROWS_AS(PerfKey::parse("tau/g"), InputError);
  CHECK_THROWS_AS(PerfKey::parse("bogus/g/1"), InputError);
  CHECK_THROWS_AS(PerfKey::parse("tau/g/x"), InputError);
}

TEST_CASE("chain events move tau with occupancy") {
  PerfMap perf(4);
  perf.register_gpu("g");
  perf.set_base_latency("g", 1, 4, 0.002);
  perf.refresh_latency("g", 0.0);
  const auto key = PerfKey::layer_latency("g", 2);
  CHECK(perf.read(key, 0.0) == 0.002);
  PipelineChain chain;
  chain.hops = {{"g", 1, 4}};
  perf.on_chain_event(chain, PerfMap::ChainEvent::kSelect, 1.0);
  CHECK(perf.occupancy("g") == 1);
  CHECK(*perf.read(key, 1.0) == doctest::Approx(0.004));
  perf.on_chain_event(chain, PerfMap::ChainEvent::kRelease, 2.0);
  CHECK(perf.occupancy("g") == 0);
  CHECK(perf.read(key, 2.0) == 0.002);
}

TEST_CASE("select then release restores the tau map") {
  const auto r = testing::prop_chain_event_round_trip(200, 4);
  INFO(r.first_failure);
  CHECK(r.ok());
}

TEST_CASE("layer loads and CoV") {
  CHECK(layer_load_cov(std::vector<double>{0.3, 0.3, 0.3}) == 0.0);
  CHECK(layer_load_cov(std::vector<double>{0.2, 0.4}) ==
        doctest::Approx(1.0 / 3.0));
  CHECK(layer_load_cov(std::vector<double>{0.0, 0.0}) == 0.0);

  LayerLoad l;
  l.kv_fraction = 0.2;
  l.compute_fraction = 0.4;
  CHECK(l.load() == doctest::Approx(0.3));

  // Zero cluster totals give zero load.
  std::vector<LayerSlice> placement = {{"a", 1, 2}};
  auto loads = layer_loads(2, placement, {}, 0.0, 0.0);
  REQUIRE(loads.size() == 2);
  CHECK(loads[0].load() == 0.0);

  std::map<GpuId, GpuUsage> usage = {{"a", {50.0, 2.0}}, {"b", {150.0, 2.0}}};
  placement = {{"a", 1, 1}, {"b", 2, 2}, {"a", 3, 3}};
  loads = layer_loads(3, placement, usage, 1000.0, 8.0, 0.5);
  CHECK(loads[0].kv_fraction == doctest::Approx(0.05));
  CHECK(loads[1].kv_fraction == doctest::Approx(0.15));
  CHECK(loads[1].compute_fraction == doctest::Approx(0.25));
  CHECK(loads[1].load() == doctest::Approx(0.2));

  // Identical hosting gives equal loads.
  placement = {{"a", 1, 3}};
  loads = layer_loads(3, placement, usage, 1000.0, 8.0);
  std::vector<double> v;
  for (const auto& x : loads) v.push_back(x.load());
  CHECK(layer_load_cov(v) == 0.0);
}

TEST_CASE("read-your-writes and expiry property") {
  const auto r = testing::prop_perf_map_read_your_writes(300, 2);
  INFO(r.first_failure);
  CHECK(r.ok());
}
