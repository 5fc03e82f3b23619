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

#include "decserve/trace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "decserve/errors.hpp"
#include "json.hpp"

namespace decserve {

TraceProfile trace_profile(const std::string& name) {
  if (name == "sharegpt") {
    return {name, std::log(160.0), 0.9, std::log(180.0), 0.7, 2048};
  }
  if (name == "wildgpt") {
    return {name, std::log(90.0), 1.0, std::log(300.0), 0.6, 2048};
  }
  throw InputError("unknown trace profile: " + name);
}

std::vector<std::string> trace_profile_names() { return {"sharegpt", "wildgpt"}; }

std::vector<Request> generate_trace(const TraceProfile& profile,
                                    double rate_rps, std::size_t count,
                                    std::uint64_t seed) {
  if (!(rate_rps > 0.0)) throw InputError("arrival rate must be positive");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate_rps);
  std::lognormal_distribution<double> prompt(profile.prompt_mu,
                                             profile.prompt_sigma);
  std::lognormal_distribution<double> output(profile.output_mu,
                                             profile.output_sigma);
  auto tokens = [&](double x) {
    return std::clamp(static_cast<int>(std::lround(x)), 1, profile.max_tokens);
  };
  std::vector<Request> out;
  out.reserve(count);
  double t = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    t += gap(rng);
    Request r;
    r.id = "r" + std::to_string(i);
    r.arrival_time = t;
    r.prompt_tokens = tokens(prompt(rng));
    r.output_tokens = tokens(output(rng));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Request> read_trace(std::istream& in) {
  std::vector<Request> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("trace line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    Request r;
    try {
      r.arrival_time = j.at("arrival_s").get<double>();
      r.prompt_tokens = j.at("prompt_tokens").get<int>();
      r.output_tokens = j.at("output_tokens").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError("trace line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (r.arrival_time < 0.0 || r.prompt_tokens < 1 || r.output_tokens < 1) {
      throw InputError("trace line " + std::to_string(line_no) +
                       ": arrival must be >= 0 and token counts >= 1");
    }
    if (!out.empty() && r.arrival_time < out.back().arrival_time) {
      throw InputError("trace line " + std::to_string(line_no) +
                       ": arrivals must be sorted");
    }
    r.id = "r" + std::to_string(out.size());
    out.push_back(std::move(r));
  }
  return out;
}

void write_trace(std::ostream& out, const std::vector<Request>& trace) {
  for (const auto& r : trace) {
    nlohmann::json j = {{"arrival_s", r.arrival_time},
                        {"prompt_tokens", r.prompt_tokens},
                        {"output_tokens", r.output_tokens}};
    out << j.dump() << '\n';
  }
}

}  // namespace decserve
