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

#include "decserve/io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "decserve/errors.hpp"

namespace decserve {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + ": missing or mistyped field '" + name + "'");
  }
}

template <typename T>
T field_or(const json& j, const char* name, T fallback,
           const std::string& where) {
  if (!j.contains(name) || j.at(name).is_null()) return fallback;
  return field<T>(j, name, where);
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected a JSON object");
}

void require_array(const json& j, const char* name, const std::string& where) {
  if (!j.contains(name) || !j.at(name).is_array()) {
    throw InputError(where + ": '" + name + "' must be an array");
  }
}

// Reads JSON lines, skipping blank lines; fn gets the parsed object and a
// location string.
template <typename Fn>
void for_each_line(std::istream& in, const std::string& what, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = what + " line " + std::to_string(line_no);
    fn(parse_json(line, where), where);
  }
}

}  // namespace

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann only reports a byte offset; turn it into line and column.
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte, text.size() + 1);
    for (std::size_t i = 0; i + 1 < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw InputError(source + ": malformed JSON at line " +
                     std::to_string(line) + ", column " +
                     std::to_string(column));
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

GpuNode gpu_from_json(const json& j, double default_reserve_fraction) {
  require_object(j, "gpu");
  GpuNode g;
  g.id = field<std::string>(j, "id", "gpu");
  const std::string where = "gpu " + g.id;
  g.region = field<std::string>(j, "region", where);
  g.vram_bytes = field<double>(j, "vram_bytes", where);
  g.flops = field<double>(j, "flops", where);
  g.reserve_fraction =
      field_or<double>(j, "reserve_fraction", default_reserve_fraction, where);
  g.ram_token_capacity =
      field_or<std::int64_t>(j, "ram_token_capacity", 0, where);
  if (g.id.empty()) throw InputError("gpu id must not be empty");
  if (!(g.vram_bytes > 0.0) || !std::isfinite(g.vram_bytes)) {
    throw InputError(where + ": vram_bytes must be > 0");
  }
  if (!(g.flops > 0.0) || !std::isfinite(g.flops)) {
    throw InputError(where + ": flops must be > 0");
  }
  if (!(g.reserve_fraction >= 0.0 && g.reserve_fraction < 1.0)) {
    throw InputError(where + ": reserve_fraction must be in [0, 1)");
  }
  if (g.ram_token_capacity < 0) {
    throw InputError(where + ": ram_token_capacity must be >= 0");
  }
  return g;
}

json gpu_to_json(const GpuNode& g) {
  return {{"id", g.id},
          {"region", g.region},
          {"vram_bytes", g.vram_bytes},
          {"flops", g.flops},
          {"reserve_fraction", g.reserve_fraction},
          {"ram_token_capacity", g.ram_token_capacity}};
}

ClusterSnapshot cluster_from_json(const json& j,
                                  double default_reserve_fraction) {
  require_object(j, "cluster");
  require_array(j, "gpus", "cluster");
  ClusterSnapshot c;
  for (const auto& g : j.at("gpus")) {
    c.gpus.push_back(gpu_from_json(g, default_reserve_fraction));
    c.regions.insert(c.gpus.back().region);
  }
  if (j.contains("regions")) {
    for (const auto& r : field<std::vector<std::string>>(j, "regions",
                                                         "cluster")) {
      c.regions.insert(r);
    }
  }
  if (j.contains("links")) {
    require_array(j, "links", "cluster");
    for (const auto& l : j.at("links")) {
      require_object(l, "link");
      const auto from = field<std::string>(l, "from", "link");
      const auto to = field<std::string>(l, "to", "link");
      const double rtt_ms = field<double>(l, "rtt_ms", "link " + from + "->" + to);
      c.links[{from, to}] = rtt_ms / 1000.0;
    }
  }
  c.default_cross_region_rtt =
      field_or<double>(j, "default_cross_region_rtt_ms",
                       kDefaultCrossRegionRtt * 1000.0, "cluster") /
      1000.0;
  if (!(c.default_cross_region_rtt >= 0.0)) {
    throw InputError("cluster: default_cross_region_rtt_ms must be >= 0");
  }
  require_valid(c);
  return c;
}

json cluster_to_json(const ClusterSnapshot& c) {
  json gpus = json::array();
  for (const auto& g : c.gpus) gpus.push_back(gpu_to_json(g));
  json links = json::array();
  for (const auto& [pair, rtt] : c.links) {
    links.push_back({{"from", pair.first}, {"to", pair.second},
                     {"rtt_ms", rtt * 1000.0}});
  }
  return {{"gpus", gpus},
          {"links", links},
          {"regions", c.regions},
          {"default_cross_region_rtt_ms", c.default_cross_region_rtt * 1000.0}};
}

ModelSpec model_from_json(const json& j) {
  require_object(j, "model");
  ModelSpec m;
  m.name = field_or<std::string>(j, "name", "", "model");
  m.layer_count = field<int>(j, "layer_count", "model");
  m.bytes_per_layer = field<double>(j, "bytes_per_layer", "model");
  m.flops_per_layer_per_token =
      field<double>(j, "flops_per_layer_per_token", "model");
  validate_model(m);
  return m;
}

json model_to_json(const ModelSpec& m) {
  return {{"name", m.name},
          {"layer_count", m.layer_count},
          {"bytes_per_layer", m.bytes_per_layer},
          {"flops_per_layer_per_token", m.flops_per_layer_per_token}};
}

AllocationPlan plan_from_json(const json& j) {
  require_object(j, "plan");
  require_array(j, "pipelines", "plan");
  AllocationPlan p;
  for (const auto& pj : j.at("pipelines")) {
    require_object(pj, "pipeline");
    require_array(pj, "stages", "pipeline");
    Pipeline pipe;
    pipe.region = field_or<std::string>(pj, "region", "", "pipeline");
    for (const auto& sj : pj.at("stages")) {
      LayerSlice s;
      s.gpu_id = field<std::string>(sj, "gpu_id", "stage");
      s.start_layer = field<int>(sj, "start_layer", "stage " + s.gpu_id);
      s.end_layer = field<int>(sj, "end_layer", "stage " + s.gpu_id);
      if (s.start_layer < 1 || s.end_layer < s.start_layer) {
        throw InputError("stage " + s.gpu_id + ": bad layer range");
      }
      pipe.stages.push_back(std::move(s));
    }
    p.stage_total += static_cast<int>(pipe.stages.size());
    p.pipelines.push_back(std::move(pipe));
  }
  p.replication_count = static_cast<int>(p.pipelines.size());
  p.objective_score = field_or<double>(j, "objective", 0.0, "plan");
  if (j.contains("per_k")) {
    for (const auto& e : j.at("per_k")) {
      PerKEntry entry;
      entry.region = field_or<std::string>(e, "region", "", "per_k");
      entry.k = field<int>(e, "k", "per_k");
      entry.s_star = field<int>(e, "s_star", "per_k");
      entry.z = field<double>(e, "z", "per_k");
      p.per_k.push_back(std::move(entry));
    }
  }
  return p;
}

json plan_to_json(const AllocationPlan& p) {
  json pipelines = json::array();
  for (const auto& pipe : p.pipelines) {
    json stages = json::array();
    for (const auto& s : pipe.stages) {
      stages.push_back({{"gpu_id", s.gpu_id},
                        {"start_layer", s.start_layer},
                        {"end_layer", s.end_layer}});
    }
    pipelines.push_back({{"region", pipe.region}, {"stages", stages}});
  }
  json per_k = json::array();
  for (const auto& e : p.per_k) {
    per_k.push_back(
        {{"region", e.region}, {"k", e.k}, {"s_star", e.s_star}, {"z", e.z}});
  }
  return {{"k", p.replication_count},
          {"objective", p.objective_score},
          {"pipelines", pipelines},
          {"per_k", per_k}};
}

json chain_to_json(const PipelineChain& chain) {
  json hops = json::array();
  for (const auto& h : chain.hops) {
    hops.push_back({{"gpu_id", h.gpu_id},
                    {"start_layer", h.start_layer},
                    {"end_layer", h.end_layer}});
  }
  return {{"session", chain.session_id},
          {"hops", hops},
          {"predicted_latency_s", chain.predicted_latency}};
}

std::vector<MembershipEvent> read_events(std::istream& in,
                                         double default_reserve_fraction) {
  std::vector<MembershipEvent> out;
  for_each_line(in, "events", [&](const json& j, const std::string& where) {
    require_object(j, where);
    MembershipEvent e;
    e.at = field<double>(j, "t", where);
    if (!(e.at >= 0.0)) throw InputError(where + ": t must be >= 0");
    const auto kind = field<std::string>(j, "event", where);
    if (kind == "join") {
      e.kind = MembershipEvent::Kind::kJoin;
      if (!j.contains("gpu")) throw InputError(where + ": join needs 'gpu'");
      e.gpu = gpu_from_json(j.at("gpu"), default_reserve_fraction);
    } else if (kind == "leave") {
      e.kind = MembershipEvent::Kind::kLeave;
      e.gpu_id = field<std::string>(j, "gpu_id", where);
    } else {
      throw InputError(where + ": event must be 'join' or 'leave'");
    }
    if (!out.empty() && e.at < out.back().at) {
      throw InputError(where + ": events must be sorted by t");
    }
    out.push_back(std::move(e));
  });
  return out;
}

void write_perf_dump(std::ostream& out, const std::vector<DumpRecord>& dump) {
  for (const auto& r : dump) {
    out << json{{"key", r.key.to_string()}, {"value", r.value},
                {"age_s", r.age_s}}
               .dump()
        << '\n';
  }
}

std::vector<DumpRecord> read_perf_dump(std::istream& in) {
  std::vector<DumpRecord> out;
  for_each_line(in, "perf dump", [&](const json& j, const std::string& where) {
    require_object(j, where);
    DumpRecord r;
    r.key = PerfKey::parse(field<std::string>(j, "key", where));
    r.value = field<double>(j, "value", where);
    r.age_s = field_or<double>(j, "age_s", 0.0, where);
    out.push_back(std::move(r));
  });
  return out;
}

json metrics_to_json(const MetricsReport& m) {
  json events = json::array();
  for (const auto& e : m.events) events.push_back({{"t", e.at}, {"what", e.what}});
  return {{"throughput_rps", m.throughput_rps},
          {"latency",
           {{"avg", m.latency_avg},
            {"p95", m.latency_p95},
            {"p99", m.latency_p99},
            {"p100", m.latency_p100}}},
          {"rejected", m.rejected},
          {"completed", m.completed},
          {"total", m.total},
          {"in_flight", m.in_flight},
          {"duration_s", m.duration_s},
          {"per_gpu_util", m.per_gpu_utilization},
          {"events", events}};
}

}  // namespace decserve
