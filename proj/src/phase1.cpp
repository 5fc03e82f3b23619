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

#include "decserve/phase1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>

#include "decserve/errors.hpp"
#include "decserve/waterfill.hpp"

namespace decserve {

std::vector<LayerSlice> AllocationPlan::slices() const {
  std::vector<LayerSlice> out;
  for (const auto& p : pipelines) {
    out.insert(out.end(), p.stages.begin(), p.stages.end());
  }
  return out;
}

int AllocationPlan::layer_count() const {
  int layers = 0;
  for (const auto& p : pipelines) {
    for (const auto& s : p.stages) layers = std::max(layers, s.end_layer);
  }
  return layers;
}

int k_max(std::span<const int> capacities, int layers) {
  if (layers < 1) return 0;
  long long total = 0;
  for (int c : capacities) total += std::max(c, 0);
  const long long by_capacity = total / layers;
  return static_cast<int>(
      std::min<long long>(static_cast<long long>(capacities.size()),
                          by_capacity));
}

namespace {

constexpr int kInf = std::numeric_limits<int>::max() / 4;

// Pipelines are anonymous inside the search; replaying the decisions in
// order recovers which GPU went where. A decision names the residual value
// that was extended (L for a fresh pipeline) or -1 for a skip.
std::vector<std::vector<std::size_t>> replay(
    std::span<const int> caps, int layers,
    const std::vector<int>& decisions) {
  struct Open {
    int residual;
    std::size_t group;
  };
  std::vector<std::vector<std::size_t>> groups;
  std::vector<Open> open;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const int d = decisions[i];
    if (d < 0) continue;
    if (d == layers) {
      groups.push_back({i});
      const int r = layers - caps[i];
      if (r > 0) open.push_back({r, groups.size() - 1});
      continue;
    }
    // First-opened pipeline among those sharing this residual.
    auto it = std::find_if(open.begin(), open.end(),
                           [d](const Open& o) { return o.residual == d; });
    if (it == open.end()) break;
    groups[it->group].push_back(i);
    it->residual -= caps[i];
    if (it->residual <= 0) open.erase(it);
  }
  return groups;
}

// Plain recursion over (i, r, f) with skip / extend / start.
class PlainDp {
 public:
  PlainDp(std::span<const int> caps, int layers, int k)
      : caps_(caps), layers_(layers), k_(k) {}

  std::optional<StageSolution> run() {
    Dp1State root;
    const int best = solve(root);
    if (best >= kInf) return std::nullopt;
    std::vector<int> decisions;
    Dp1State state = root;
    while (!(state.full_count == k_ && state.residuals.empty())) {
      const int d = memo_.at(state).decision;
      decisions.push_back(d);
      state = apply(state, d);
    }
    StageSolution out;
    out.stages = best;
    out.groups = replay(caps_, layers_, decisions);
    return out;
  }

 private:
  struct Entry {
    int value;
    int decision;
  };

  Dp1State apply(const Dp1State& s, int decision) const {
    Dp1State next{s.gpu_index + 1, s.residuals, s.full_count};
    if (decision < 0) return next;
    const int c = caps_[s.gpu_index];
    if (decision == layers_) {
      const int r = layers_ - c;
      if (r <= 0) {
        ++next.full_count;
      } else {
        next.residuals.insert(
            std::upper_bound(next.residuals.begin(), next.residuals.end(), r),
            r);
      }
      return next;
    }
    auto it = std::find(next.residuals.begin(), next.residuals.end(), decision);
    const int r = *it - c;
    next.residuals.erase(it);
    if (r <= 0) {
      ++next.full_count;
    } else {
      next.residuals.insert(
          std::upper_bound(next.residuals.begin(), next.residuals.end(), r), r);
    }
    return next;
  }

  int solve(const Dp1State& s) {
    if (s.full_count == k_ && s.residuals.empty()) return 0;
    if (s.gpu_index >= caps_.size()) return kInf;
    if (auto it = memo_.find(s); it != memo_.end()) return it->second.value;

    int best = kInf;
    int decision = -1;
    auto consider = [&](int d, int cost) {
      const int sub = solve(apply(s, d));
      if (sub < kInf && sub + cost < best) {
        best = sub + cost;
        decision = d;
      }
    };
    // Preference on ties: extend (smallest residual first), start, skip.
    if (caps_[s.gpu_index] > 0) {
      int last = -1;
      for (int r : s.residuals) {
        if (r == last) continue;
        last = r;
        consider(r, 1);
      }
      if (s.full_count + static_cast<int>(s.residuals.size()) < k_) {
        consider(layers_, 1);
      }
    }
    consider(-1, 0);
    memo_[s] = {best, decision};
    return best;
  }

  std::span<const int> caps_;
  int layers_;
  int k_;
  std::map<Dp1State, Entry> memo_;
};

// Exact search for the pruned mode. Skipping a positive-capacity GPU and
// later using a smaller one is never better, so some optimal solution uses a
// prefix of the sorted list: for s = lower bound, lower bound + 1, ... ask
// whether the s largest GPUs cover k pipelines. Each feasibility check is a
// bin-completion search: the largest unused GPU always belongs to the next
// pipeline, whose other members are enumerated as minimal covers, least
// waste first. GPUs are tracked as counts per distinct capacity.
class CoverSearch {
 public:
  CoverSearch(std::span<const int> caps, int layers, int k, std::size_t budget)
      : caps_(caps), layers_(layers), k_(k), budget_(budget) {
    positive_ = 0;
    while (positive_ < caps_.size() && caps_[positive_] > 0) ++positive_;
    prefix_.assign(positive_ + 1, 0);
    for (std::size_t i = 0; i < positive_; ++i) {
      prefix_[i + 1] = prefix_[i] + caps_[i];
    }
  }

  std::optional<StageSolution> run() {
    const long long need = static_cast<long long>(k_) * layers_;
    if (k_ < 1 || static_cast<std::size_t>(k_) > positive_ ||
        prefix_[positive_] < need) {
      return std::nullopt;
    }
    std::size_t s = std::max(static_cast<std::size_t>(k_),
                             size_bound(prefix_, layers_, static_cast<std::size_t>(k_)));
    if (s > positive_) return std::nullopt;
    while (prefix_[s] < need) ++s;
    bool proven = true;
    for (; s <= positive_; ++s) {
      load(s);
      nodes_ = 0;
      exhausted_ = false;
      // Once one size ran out of budget, later sizes only get a short look.
      limit_ = proven ? budget_ : std::max<std::size_t>(budget_ / 100, 1000);
      if (search(k_, prefix_[s])) return finish(s, proven);
      if (exhausted_) proven = false;
    }
    return std::nullopt;
  }

 private:
  using Bin = std::vector<std::size_t>;

  // b disjoint pipelines of at most m GPUs each use at most min(b * m, N)
  // GPUs with at least b * L layers between them, so at most
  //   cover(m) = max { b : sum of the min(b * m, N) largest >= b * L }
  // pipelines have m or fewer stages. Filling sizes 1, 2, ... up to those
  // caps bounds the total stage count from below.
  static std::size_t size_bound(const std::vector<long long>& prefix,
                                int layers, std::size_t want) {
    const std::size_t n = prefix.size() - 1;
    auto cover = [&](std::size_t m) {
      std::size_t b = 0;
      while (b < want && prefix[std::min((b + 1) * m, n)] >=
                             static_cast<long long>(b + 1) * layers) {
        ++b;
      }
      return b;
    };
    std::size_t total = 0;
    std::size_t placed = 0;
    for (std::size_t m = 1; placed < want && m <= n; ++m) {
      const std::size_t allowed = std::min(cover(m), want);
      const std::size_t take = allowed > placed ? allowed - placed : 0;
      total += take * m;
      placed += take;
    }
    // Not even bins of every remaining GPU suffice.
    return placed < want ? n + 1 : total;
  }

  // The size bound over the GPUs still unused.
  bool size_bound_holds(int bins_left) {
    scratch_.assign(1, 0);
    for (std::size_t v = 0; v < values_.size(); ++v) {
      for (int c = 0; c < counts_[v]; ++c) {
        scratch_.push_back(scratch_.back() + values_[v]);
      }
    }
    return size_bound(scratch_, layers_, static_cast<std::size_t>(bins_left)) <
           scratch_.size();
  }

  void load(std::size_t s) {
    values_.clear();
    counts_.clear();
    for (std::size_t i = 0; i < s; ++i) {
      if (values_.empty() || values_.back() != caps_[i]) {
        values_.push_back(caps_[i]);
        counts_.push_back(0);
      }
      ++counts_.back();
    }
    failed_.clear();
    bins_.clear();
  }

  StageSolution finish(std::size_t s, bool proven) const {
    // Hand out capacity indices per value in ascending order.
    std::vector<std::size_t> next(values_.size(), 0);
    std::vector<std::size_t> first(values_.size(), 0);
    for (std::size_t i = 0, v = 0; i < s; ++i) {
      if (caps_[i] != values_[v]) first[++v] = i;
    }
    StageSolution out;
    out.proven_optimal = proven;
    for (const Bin& bin : bins_) {
      std::vector<std::size_t> group;
      for (std::size_t v : bin) group.push_back(first[v] + next[v]++);
      out.stages += static_cast<int>(group.size());
      out.groups.push_back(std::move(group));
    }
    return out;
  }

  std::string key(int bins_left) const {
    std::string k(counts_.size() + 1, '\0');
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      k[i] = static_cast<char>(counts_[i] & 0xff);
    }
    k.back() = static_cast<char>(bins_left);
    // Counts above 255 would alias; append them in full when present.
    for (int c : counts_) {
      if (c > 0xff) {
        k += std::to_string(c);
        k += ',';
      }
    }
    return k;
  }

  // Minimal covers of `need` from values at index >= from, in non-increasing
  // order. Only the smallest closing value is kept: closing with a larger one
  // leaves strictly less for the other pipelines.
  void collect(std::size_t from, int need, Bin& cur,
               std::vector<std::pair<int, Bin>>& out) {
    std::size_t close = values_.size();
    for (std::size_t v = from; v < values_.size(); ++v) {
      if (counts_[v] > 0 && values_[v] >= need) close = v;
    }
    if (close < values_.size()) {
      cur.push_back(close);
      out.emplace_back(values_[close] - need, cur);
      cur.pop_back();
    }
    for (std::size_t v = from; v < values_.size(); ++v) {
      if (counts_[v] == 0 || values_[v] >= need) continue;
      --counts_[v];
      cur.push_back(v);
      collect(v, need - values_[v], cur, out);
      cur.pop_back();
      ++counts_[v];
    }
  }

  bool search(int bins_left, long long remaining) {
    if (bins_left == 0) return true;
    if (remaining < static_cast<long long>(bins_left) * layers_) return false;
    if (++nodes_ > limit_) {
      exhausted_ = true;
      return false;
    }
    std::string k = key(bins_left);
    if (failed_.contains(k)) return false;
    if (!size_bound_holds(bins_left)) {
      failed_.insert(std::move(k));
      return false;
    }

    std::size_t top = 0;
    while (counts_[top] == 0) ++top;
    --counts_[top];
    std::vector<std::pair<int, Bin>> covers;
    Bin cur{top};
    if (values_[top] >= layers_) {
      covers.emplace_back(values_[top] - layers_, cur);
    } else {
      collect(top, layers_ - values_[top], cur, covers);
    }
    std::stable_sort(covers.begin(), covers.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    ++counts_[top];

    for (const auto& [waste, bin] : covers) {
      long long used = 0;
      for (std::size_t v : bin) {
        --counts_[v];
        used += values_[v];
      }
      bins_.push_back(bin);
      const bool ok = search(bins_left - 1, remaining - used);
      if (!ok) bins_.pop_back();
      for (std::size_t v : bin) ++counts_[v];
      if (ok) {
        for (std::size_t v : bin) --counts_[v];
        return true;
      }
      if (exhausted_) return false;
    }
    failed_.insert(std::move(k));
    return false;
  }

  std::span<const int> caps_;
  int layers_;
  int k_;
  std::size_t budget_;
  std::size_t limit_ = 0;
  std::size_t positive_ = 0;
  std::vector<long long> prefix_;
  std::vector<int> values_;
  std::vector<int> counts_;
  std::size_t nodes_ = 0;
  bool exhausted_ = false;
  std::vector<Bin> bins_;
  std::vector<long long> scratch_;
  std::unordered_set<std::string> failed_;
};

}  // namespace

std::optional<StageSolution> min_stages(std::span<const int> capacities,
                                        int layers, int k,
                                        const Dp1Options& options) {
  if (layers < 1 || k < 1) return std::nullopt;
  if (!std::is_sorted(capacities.begin(), capacities.end(),
                      std::greater<int>())) {
    throw InputError("min_stages expects capacities sorted non-increasing");
  }
  if (options.pruned) {
    return CoverSearch(capacities, layers, k, options.node_budget).run();
  }
  return PlainDp(capacities, layers, k).run();
}

double score(int k, int s_star, const ObjectiveParams& params) {
  if (params.t_comp_seconds == 0.0 && params.rtt_seconds == 0.0) {
    throw DegenerateObjective();
  }
  if (k < 1 || s_star < k) throw InputError("score requires s* >= k >= 1");
  const double denom = params.t_comp_seconds +
                       (static_cast<double>(s_star) / k) * params.rtt_seconds;
  return std::pow(static_cast<double>(k), params.alpha) / denom;
}

ObjectiveParams estimate_objective_params(const ClusterSnapshot& cluster,
                                          const RegionId& region,
                                          const ModelSpec& model, double alpha,
                                          double mean_tokens_per_request) {
  std::vector<const GpuNode*> members;
  for (const GpuNode* g : cluster.region_gpus(region)) {
    if (layer_capacity(*g, model) > 0 && g->flops > 0.0) members.push_back(g);
  }
  ObjectiveParams params;
  params.alpha = alpha;
  if (members.empty()) return params;
  double inverse_sum = 0.0;
  for (const GpuNode* g : members) inverse_sum += 1.0 / g->flops;
  const double harmonic = static_cast<double>(members.size()) / inverse_sum;
  params.t_comp_seconds = model.layer_count * model.flops_per_layer_per_token *
                          mean_tokens_per_request / harmonic;
  double rtt_sum = 0.0;
  std::size_t pairs = 0;
  for (const GpuNode* a : members) {
    for (const GpuNode* b : members) {
      if (a == b) continue;
      rtt_sum += cluster.rtt(a->id, b->id);
      ++pairs;
    }
  }
  params.rtt_seconds = pairs ? rtt_sum / static_cast<double>(pairs) : 0.0;
  return params;
}

namespace {

struct RegionPlan {
  std::vector<Pipeline> pipelines;
  std::vector<PerKEntry> per_k;
  int k = 0;
  int stages = 0;
  double z = 0.0;
};

std::optional<RegionPlan> allocate_region(const ClusterSnapshot& cluster,
                                          const RegionId& region,
                                          const ModelSpec& model,
                                          const ObjectiveParams& params,
                                          const Dp1Options& dp) {
  std::vector<const GpuNode*> gpus = cluster.region_gpus(region);
  std::vector<std::pair<int, const GpuNode*>> ranked;
  for (const GpuNode* g : gpus) ranked.emplace_back(layer_capacity(*g, model), g);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  std::vector<int> caps;
  for (const auto& [c, g] : ranked) caps.push_back(c);

  const int layers = model.layer_count;
  const int kmax = k_max(caps, layers);
  if (kmax < 1) return std::nullopt;

  RegionPlan out;
  std::optional<StageSolution> chosen;
  for (int k = 1; k <= kmax; ++k) {
    auto solution = min_stages(caps, layers, k, dp);
    if (!solution) continue;
    const double z = score(k, solution->stages, params);
    out.per_k.push_back({region, k, solution->stages, z});
    if (!chosen || z > out.z) {
      out.z = z;
      out.k = k;
      out.stages = solution->stages;
      chosen = std::move(solution);
    }
  }
  if (!chosen) return std::nullopt;

  for (const auto& group : chosen->groups) {
    Pipeline p;
    p.region = region;
    int cursor = 1;
    for (std::size_t idx : group) {
      const int len = std::min(caps[idx], layers - cursor + 1);
      if (len <= 0) break;
      p.stages.push_back({ranked[idx].second->id, cursor, cursor + len - 1});
      cursor += len;
    }
    out.pipelines.push_back(std::move(p));
  }
  return out;
}

}  // namespace

AllocationPlan allocate(const ClusterSnapshot& cluster, const ModelSpec& model,
                        const AllocatorSettings& settings) {
  validate_model(model);
  require_valid(cluster);
  AllocationPlan plan;
  std::map<GpuId, GpuNode> by_id;
  for (const auto& g : cluster.gpus) by_id.emplace(g.id, g);

  for (const RegionId& region : cluster.regions) {
    const ObjectiveParams params =
        settings.fixed_params
            ? *settings.fixed_params
            : estimate_objective_params(cluster, region, model, settings.alpha,
                                        settings.mean_tokens_per_request);
    auto rp = allocate_region(cluster, region, model, params, settings.dp);
    if (!rp) continue;
    plan.replication_count += rp->k;
    plan.stage_total += rp->stages;
    plan.objective_score += rp->z;
    plan.per_k.insert(plan.per_k.end(), rp->per_k.begin(), rp->per_k.end());
    for (auto& p : rp->pipelines) {
      plan.pipelines.push_back(settings.rebalance
                                   ? rebalance_pipeline(p, by_id, model)
                                   : std::move(p));
    }
  }
  if (plan.pipelines.empty()) throw NoFeasiblePipeline();
  return plan;
}

AllocationPlan allocate(const ClusterSnapshot& cluster, const ModelSpec& model,
                        const ObjectiveParams& params) {
  AllocatorSettings settings;
  settings.alpha = params.alpha;
  settings.fixed_params = params;
  return allocate(cluster, model, settings);
}

std::string check_plan(const AllocationPlan& plan,
                       const ClusterSnapshot& cluster, const ModelSpec& model,
                       bool same_region) {
  std::ostringstream err;
  std::unordered_set<GpuId> used;
  const int layers = model.layer_count;
  for (std::size_t p = 0; p < plan.pipelines.size(); ++p) {
    const auto& pipe = plan.pipelines[p];
    if (pipe.stages.empty()) {
      err << "pipeline " << p << " has no stages";
      return err.str();
    }
    int expected = 1;
    for (const auto& s : pipe.stages) {
      const GpuNode* g = cluster.find(s.gpu_id);
      if (!g) {
        err << "pipeline " << p << " uses unknown gpu " << s.gpu_id;
        return err.str();
      }
      if (same_region && g->region != pipe.region) {
        err << "gpu " << s.gpu_id << " is outside region " << pipe.region;
        return err.str();
      }
      if (!used.insert(s.gpu_id).second) {
        err << "gpu " << s.gpu_id << " appears in more than one stage";
        return err.str();
      }
      if (s.start_layer != expected || s.end_layer < s.start_layer) {
        err << "pipeline " << p << " has a gap or overlap at layer "
            << expected;
        return err.str();
      }
      if (s.length() > layer_capacity(*g, model)) {
        err << "gpu " << s.gpu_id << " exceeds its layer capacity";
        return err.str();
      }
      expected = s.end_layer + 1;
    }
    if (expected != layers + 1) {
      err << "pipeline " << p << " ends at layer " << expected - 1
          << " instead of " << layers;
      return err.str();
    }
  }
  return {};
}

}  // namespace decserve
