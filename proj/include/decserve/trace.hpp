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

#ifndef DECSERVE_TRACE_HPP_
#define DECSERVE_TRACE_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace decserve {

struct Request {
  std::string id;
  double arrival_time = 0.0;
  int prompt_tokens = 1;
  int output_tokens = 1;
};

// Log-normal token counts; mu and sigma are in log space.
struct TraceProfile {
  std::string name;
  double prompt_mu = 5.0;
  double prompt_sigma = 1.0;
  double output_mu = 5.0;
  double output_sigma = 1.0;
  int max_tokens = 2048;
};

// "sharegpt": chat turns with medium prompts and answers.
// "wildgpt": shorter prompts, longer answers.
TraceProfile trace_profile(const std::string& name);
std::vector<std::string> trace_profile_names();

// Poisson arrivals at rate_rps starting at t = 0.
std::vector<Request> generate_trace(const TraceProfile& profile,
                                    double rate_rps, std::size_t count,
                                    std::uint64_t seed);

// JSON lines {"arrival_s", "prompt_tokens", "output_tokens"}. Requests are
// named r0, r1, ... in file order. Throws InputError on malformed lines or
// out-of-order arrivals.
std::vector<Request> read_trace(std::istream& in);
void write_trace(std::ostream& out, const std::vector<Request>& trace);

}  // namespace decserve

#endif  // DECSERVE_TRACE_HPP_
