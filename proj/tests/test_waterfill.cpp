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
#include "decserve/waterfill.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace decserve;
using testing::layer_gpu;
using testing::layer_model;

namespace {

FractionalAllocation lambda_for(std::vector<double> f, std::vector<int> c,
                                int layers) {
  return solve_lambda(f, c, layers);
}

std::vector<int> round(std::vector<double> x, std::vector<int> c) {
  FractionalAllocation frac;
  frac.shares = std::move(x);
  return hamilton_round(frac, c).shares;
}

}  // namespace

TEST_CASE("solve_lambda examples") {
  auto a = lambda_for({1, 1}, {6, 6}, 8);
  CHECK(a.lambda == doctest::Approx(4.0));
  CHECK(a.shares[0] == doctest::Approx(4.0));
  CHECK(a.shares[1] == doctest::Approx(4.0));

  a = lambda_for({3, 1}, {6, 6}, 8);
  CHECK(a.lambda == doctest::Approx(2.0));
  CHECK(a.shares[0] == doctest::Approx(6.0));
  CHECK(a.shares[1] == doctest::Approx(2.0));

  a = lambda_for({10, 1}, {4, 6}, 8);
  CHECK(a.lambda == doctest::Approx(4.0));
  CHECK(a.shares[0] == doctest::Approx(4.0));
  CHECK(a.shares[1] == doctest::Approx(4.0));

  CHECK_THROWS_AS(lambda_for({1, 1}, {3, 3}, 8), InfeasibleCapacity);
}

TEST_CASE("hamilton rounding examples") {
  CHECK(round({3.6, 4.4}, {4, 5}) == std::vector<int>{4, 4});
  CHECK(round({4, 4}, {6, 6}) == std::vector<int>{4, 4});
  // Equal remainders: the lower index wins.
  CHECK(round({2.5, 2.5, 3.0}, {3, 3, 3}) == std::vector<int>{3, 2, 3});
  // A saturated entry is skipped and the unit spills onward.
  CHECK(round({2.9, 2.1}, {2, 5}) == std::vector<int>{2, 3});
}

TEST_CASE("rebalance_pipeline examples") {
  const ModelSpec m = layer_model(8);
  std::map<GpuId, GpuNode> gpus = {{"a", layer_gpu("a", "r", 6, 1.0)},
                                   {"b", layer_gpu("b", "r", 6, 1.0)}};
  Pipeline p{"r", {{"a", 1, 6}, {"b", 7, 8}}};
  auto out = rebalance_pipeline(p, gpus, m);
  CHECK(out.stages == std::vector<LayerSlice>{{"a", 1, 4}, {"b", 5, 8}});

  gpus["a"].flops = 3.0;
  p = {"r", {{"a", 1, 4}, {"b", 5, 8}}};
  out = rebalance_pipeline(p, gpus, m);
  CHECK(out.stages == std::vector<LayerSlice>{{"a", 1, 6}, {"b", 7, 8}});

  Pipeline single{"r", {{"a", 1, 8}}};
  gpus["a"] = layer_gpu("a", "r", 8, 2.0);
  CHECK(rebalance_pipeline(single, gpus, m) == single);
}

TEST_CASE("every stage keeps a layer even when compute is lopsided") {
  const ModelSpec m = layer_model(6);
  std::map<GpuId, GpuNode> gpus = {{"a", layer_gpu("a", "r", 6, 1000.0)},
                                   {"b", layer_gpu("b", "r", 6, 1.0)},
                                   {"c", layer_gpu("c", "r", 6, 1.0)}};
  Pipeline p{"r", {{"a", 1, 2}, {"b", 3, 4}, {"c", 5, 6}}};
  const auto out = rebalance_pipeline(p, gpus, m);
  REQUIRE(out.stages.size() == 3);
  for (const auto& s : out.stages) CHECK(s.length() >= 1);
  CHECK(out.stages[0].length() == 4);
}

TEST_CASE("water-fill matches the exhaustive integer optimum") {
  const auto r = testing::check_waterfill_oracle(200, 5);
  INFO(r.first_failure);
  CHECK(r.ok());
}

TEST_CASE("rebalance is idempotent") {
  const auto r = testing::prop_waterfill_idempotence(300, 9);
  INFO(r.first_failure);
  CHECK(r.ok());
}
