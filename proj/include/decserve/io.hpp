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

#ifndef DECSERVE_IO_HPP_
#define DECSERVE_IO_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "decserve/chain.hpp"
#include "decserve/membership.hpp"
#include "decserve/perf_map.hpp"
#include "decserve/phase1.hpp"
#include "decserve/sim.hpp"
#include "decserve/topology.hpp"
#include "json.hpp"

namespace decserve {

// All loaders throw InputError; parse failures name the line and column.
nlohmann::json parse_json(const std::string& text, const std::string& source);
std::string read_file(const std::string& path);

ClusterSnapshot cluster_from_json(const nlohmann::json& j,
                                  double default_reserve_fraction =
                                      kDefaultReserveFraction);
nlohmann::json cluster_to_json(const ClusterSnapshot& cluster);
GpuNode gpu_from_json(const nlohmann::json& j,
                      double default_reserve_fraction = kDefaultReserveFraction);
nlohmann::json gpu_to_json(const GpuNode& gpu);

ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ModelSpec& model);

AllocationPlan plan_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const AllocationPlan& plan);

nlohmann::json chain_to_json(const PipelineChain& chain);

// JSON lines: {"t", "event": "join"|"leave", "gpu": {...} | "gpu_id"}.
std::vector<MembershipEvent> read_events(std::istream& in,
                                         double default_reserve_fraction =
                                             kDefaultReserveFraction);

// JSON lines: {"key", "value", "age_s"}.
void write_perf_dump(std::ostream& out, const std::vector<DumpRecord>& dump);
std::vector<DumpRecord> read_perf_dump(std::istream& in);

nlohmann::json metrics_to_json(const MetricsReport& report);

}  // namespace decserve

#endif  // DECSERVE_IO_HPP_
