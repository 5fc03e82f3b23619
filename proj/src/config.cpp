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

#include "decserve/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "decserve/errors.hpp"

namespace decserve {

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      {"alpha", "> 0", "exponent on k in the replica objective Z(k)"},
      {"mix_alpha", "[0, 1]", "weight of KV memory vs compute in layer load"},
      {"cov_threshold", ">= 0", "layer-load CoV that forces a global rebalance"},
      {"publish_interval_s", "> 0", "seconds between perf-map publishes"},
      {"ttl_multiplier", "> 0", "perf entry TTL in publish intervals"},
      {"reserve_fraction", "[0, 1)", "VRAM fraction withheld from weights"},
      {"seed", "u64", "seed for traces, benches and publish phases"},
      {"contention_exponent", ">= 0", "slowdown is (1 + occupancy)^exponent"},
      {"amortize_rtt", "bool", "charge link latency once per request"},
  };
  return fields;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& v, const std::string& where) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw InputError(where + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

void check(bool ok, const char* name, const std::string& range) {
  if (!ok) throw InputError(std::string("config: ") + name + " must be " + range);
}

}  // namespace

void validate_config(const RunConfig& c) {
  check(c.alpha > 0.0, "alpha", "> 0");
  check(c.mix_alpha >= 0.0 && c.mix_alpha <= 1.0, "mix_alpha", "in [0, 1]");
  check(c.cov_threshold >= 0.0, "cov_threshold", ">= 0");
  check(c.publish_interval_s > 0.0, "publish_interval_s", "> 0");
  check(c.ttl_multiplier > 0.0, "ttl_multiplier", "> 0");
  check(c.reserve_fraction >= 0.0 && c.reserve_fraction < 1.0,
        "reserve_fraction", "in [0, 1)");
  check(c.contention_exponent >= 0.0, "contention_exponent", ">= 0");
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  RunConfig c = base;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(where + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "alpha") {
      c.alpha = to_double(value, where);
    } else if (key == "mix_alpha") {
      c.mix_alpha = to_double(value, where);
    } else if (key == "cov_threshold") {
      c.cov_threshold = to_double(value, where);
    } else if (key == "publish_interval_s") {
      c.publish_interval_s = to_double(value, where);
    } else if (key == "ttl_multiplier") {
      c.ttl_multiplier = to_double(value, where);
    } else if (key == "reserve_fraction") {
      c.reserve_fraction = to_double(value, where);
    } else if (key == "contention_exponent") {
      c.contention_exponent = to_double(value, where);
    } else if (key == "seed") {
      std::uint64_t seed = 0;
      auto [p, ec] =
          std::from_chars(value.data(), value.data() + value.size(), seed);
      if (ec != std::errc() || p != value.data() + value.size()) {
        throw InputError(where + ": seed must be an unsigned integer");
      }
      c.seed = seed;
    } else if (key == "amortize_rtt") {
      if (value == "true") {
        c.amortize_rtt = true;
      } else if (value == "false") {
        c.amortize_rtt = false;
      } else {
        throw InputError(where + ": amortize_rtt must be true or false");
      }
    } else {
      throw InputError(where + ": unknown key '" + key + "'");
    }
  }
  validate_config(c);
  return c;
}

std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os << "alpha = " << shortest(c.alpha) << '\n'
     << "mix_alpha = " << shortest(c.mix_alpha) << '\n'
     << "cov_threshold = " << shortest(c.cov_threshold) << '\n'
     << "publish_interval_s = " << shortest(c.publish_interval_s) << '\n'
     << "ttl_multiplier = " << shortest(c.ttl_multiplier) << '\n'
     << "reserve_fraction = " << shortest(c.reserve_fraction) << '\n'
     << "seed = " << c.seed << '\n'
     << "contention_exponent = " << shortest(c.contention_exponent) << '\n'
     << "amortize_rtt = " << (c.amortize_rtt ? "true" : "false") << '\n';
  return os.str();
}

SimConfig sim_config(const RunConfig& c) {
  SimConfig s;
  s.perf.publish_interval_s = c.publish_interval_s;
  s.perf.ttl_multiplier = c.ttl_multiplier;
  s.perf.latency.contention_exponent = c.contention_exponent;
  s.perf.latency.amortize_rtt = c.amortize_rtt;
  s.membership.cov_threshold = c.cov_threshold;
  s.membership.load_mix = c.mix_alpha;
  s.membership.allocator = allocator_settings(c);
  return s;
}

AllocatorSettings allocator_settings(const RunConfig& c) {
  AllocatorSettings a;
  a.alpha = c.alpha;
  return a;
}

}  // namespace decserve
