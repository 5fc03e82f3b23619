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

#include "decserve/waterfill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "decserve/errors.hpp"

namespace decserve {

FractionalAllocation solve_lambda(std::span<const double> compute,
                                  std::span<const int> capacity, int layers) {
  if (compute.size() != capacity.size() || compute.empty()) {
    throw InputError("solve_lambda needs one compute value per capacity");
  }
  long long total = 0;
  for (int c : capacity) total += std::max(c, 0);
  if (total < layers) throw InfeasibleCapacity(total, layers);
  for (double f : compute) {
    if (!(f > 0.0)) throw InputError("compute capacity must be positive");
  }

  auto filled = [&](double lambda) {
    double sum = 0.0;
    for (std::size_t i = 0; i < compute.size(); ++i) {
      sum += std::min(static_cast<double>(capacity[i]), lambda * compute[i]);
    }
    return sum;
  };

  const double target = layers;
  const double tolerance = 1e-9 * target;
  double lo = 0.0;
  double hi = target / *std::min_element(compute.begin(), compute.end()) + 1.0;
  double lambda = hi;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double sum = filled(mid);
    if (std::abs(sum - target) <= tolerance) {
      lambda = mid;
      break;
    }
    if (sum < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    lambda = hi;
  }

  FractionalAllocation out;
  out.lambda = lambda;
  out.shares.resize(compute.size());
  for (std::size_t i = 0; i < compute.size(); ++i) {
    out.shares[i] =
        std::min(static_cast<double>(capacity[i]), lambda * compute[i]);
  }
  return out;
}

IntegerAllocation hamilton_round(const FractionalAllocation& frac,
                                 std::span<const int> capacity) {
  const std::size_t n = frac.shares.size();
  if (capacity.size() != n) {
    throw InputError("hamilton_round needs one capacity per share");
  }
  const double total = std::accumulate(frac.shares.begin(), frac.shares.end(), 0.0);
  const int layers = static_cast<int>(std::llround(total));

  IntegerAllocation out;
  out.shares.resize(n);
  // Remainders are quantized so float noise cannot reorder true ties.
  std::vector<long long> remainder(n);
  int assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = std::max(frac.shares[i], 0.0);
    double nearest = std::round(x);
    if (std::abs(x - nearest) < 1e-9) x = nearest;
    const int whole = std::min(static_cast<int>(std::floor(x)), capacity[i]);
    out.shares[i] = whole;
    remainder[i] = std::llround((x - whole) * 1e9);
    assigned += whole;
  }

  int missing = layers - assigned;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t i : order) {
    if (missing <= 0) break;
    if (remainder[i] <= 0 || out.shares[i] >= capacity[i]) continue;
    ++out.shares[i];
    --missing;
  }
  // Spill to any entry with room, in index order.
  for (std::size_t i = 0; i < n && missing > 0; ++i) {
    while (missing > 0 && out.shares[i] < capacity[i]) {
      ++out.shares[i];
      --missing;
    }
  }
  if (missing > 0) throw RoundingOverflow();
  return out;
}

Pipeline rebalance_pipeline(const Pipeline& pipeline,
                            const std::map<GpuId, GpuNode>& gpus,
                            const ModelSpec& model) {
  if (pipeline.stages.size() <= 1) return pipeline;
  std::vector<double> compute;
  std::vector<int> capacity;
  int layers = 0;
  for (const auto& s : pipeline.stages) {
    auto it = gpus.find(s.gpu_id);
    if (it == gpus.end()) throw UnknownGpu(s.gpu_id);
    compute.push_back(it->second.flops);
    capacity.push_back(layer_capacity(it->second, model));
    layers += s.length();
  }

  IntegerAllocation ints =
      hamilton_round(solve_lambda(compute, capacity, layers), capacity);

  // A stage may round down to zero when one GPU is far slower than the
  // rest; it keeps one layer, taken from the stage with the longest
  // per-compute time that can spare it.
  for (std::size_t i = 0; i < ints.shares.size(); ++i) {
    if (ints.shares[i] > 0) continue;
    std::size_t donor = ints.shares.size();
    double worst = -1.0;
    for (std::size_t j = 0; j < ints.shares.size(); ++j) {
      if (ints.shares[j] <= 1) continue;
      const double t = ints.shares[j] / compute[j];
      if (t > worst) {
        worst = t;
        donor = j;
      }
    }
    if (donor == ints.shares.size()) break;
    --ints.shares[donor];
    ints.shares[i] = 1;
  }

  Pipeline out;
  out.region = pipeline.region;
  int cursor = 1;
  for (std::size_t i = 0; i < pipeline.stages.size(); ++i) {
    out.stages.push_back(
        {pipeline.stages[i].gpu_id, cursor, cursor + ints.shares[i] - 1});
    cursor += ints.shares[i];
  }
  return out;
}

}  // namespace decserve
