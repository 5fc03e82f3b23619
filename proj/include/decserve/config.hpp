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

#ifndef DECSERVE_CONFIG_HPP_
#define DECSERVE_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "decserve/sim.hpp"

namespace decserve {

// Every tunable with its default. Precedence: flags > config file > these.
struct RunConfig {
  double alpha = 1.0;
  double mix_alpha = kDefaultLoadMix;
  double cov_threshold = 0.5;
  double publish_interval_s = 1.5;
  double ttl_multiplier = 3.0;
  double reserve_fraction = kDefaultReserveFraction;
  std::uint64_t seed = 0;
  double contention_exponent = 1.0;
  bool amortize_rtt = false;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ConfigField {
  std::string name;
  std::string range;
  std::string help;
};

// Name, valid range and meaning of each RunConfig field, in file order.
const std::vector<ConfigField>& config_fields();

// "key = value" lines; '#' starts a comment. Unknown keys and values out of
// range throw InputError naming the line.
RunConfig parse_config(const std::string& text,
                       const RunConfig& base = RunConfig{});
std::string format_config(const RunConfig& config);
// Throws InputError on the first field out of range.
void validate_config(const RunConfig& config);

// Lowers the config onto the library settings it controls.
SimConfig sim_config(const RunConfig& config);
AllocatorSettings allocator_settings(const RunConfig& config);

}  // namespace decserve

#endif  // DECSERVE_CONFIG_HPP_
