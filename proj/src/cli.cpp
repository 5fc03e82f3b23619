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

#include "decserve/cli.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "decserve/bench.hpp"
#include "decserve/config.hpp"
#include "decserve/errors.hpp"
#include "decserve/io.hpp"
#include "decserve/phase2.hpp"
#include "decserve/sim.hpp"
#include "decserve/trace.hpp"

namespace decserve {

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_path;
  bool json = false;
  RunConfig flags;
  CLI::App* app = nullptr;
};

// Options whose value is copied into RunConfig only when given.
struct ConfigOptions {
  CLI::Option* alpha = nullptr;
  CLI::Option* mix_alpha = nullptr;
  CLI::Option* cov_threshold = nullptr;
  CLI::Option* publish_interval = nullptr;
  CLI::Option* ttl_multiplier = nullptr;
  CLI::Option* reserve_fraction = nullptr;
  CLI::Option* contention_exponent = nullptr;
  CLI::Option* amortize_rtt = nullptr;
  CLI::Option* seed = nullptr;
};

RunConfig resolve_config(const Globals& g, const ConfigOptions& o) {
  RunConfig c;
  if (!g.config_path.empty()) c = parse_config(read_file(g.config_path));
  auto take = [](CLI::Option* opt, auto& dst, auto src) {
    if (opt->count() > 0) dst = src;
  };
  take(o.alpha, c.alpha, g.flags.alpha);
  take(o.mix_alpha, c.mix_alpha, g.flags.mix_alpha);
  take(o.cov_threshold, c.cov_threshold, g.flags.cov_threshold);
  take(o.publish_interval, c.publish_interval_s, g.flags.publish_interval_s);
  take(o.ttl_multiplier, c.ttl_multiplier, g.flags.ttl_multiplier);
  take(o.reserve_fraction, c.reserve_fraction, g.flags.reserve_fraction);
  take(o.contention_exponent, c.contention_exponent,
       g.flags.contention_exponent);
  take(o.amortize_rtt, c.amortize_rtt, g.flags.amortize_rtt);
  take(o.seed, c.seed, g.seed);
  validate_config(c);
  return c;
}

// The main artifact goes to --out when given. stdout carries the artifact
// under --json and the human summary otherwise.
void emit(const Globals& g, std::ostream& out, const std::string& artifact,
          const std::string& summary) {
  if (!g.out_path.empty()) {
    std::ofstream f(g.out_path, std::ios::binary);
    if (!f) throw InputError("cannot write " + g.out_path);
    f << artifact;
    if (!f) throw InputError("failed writing " + g.out_path);
  }
  if (g.json || g.out_path.empty()) {
    out << artifact;
  } else {
    out << summary;
  }
}

ClusterSnapshot load_cluster(const std::string& path, const RunConfig& c) {
  return cluster_from_json(parse_json(read_file(path), path),
                           c.reserve_fraction);
}

ModelSpec load_model(const std::string& path) {
  return model_from_json(parse_json(read_file(path), path));
}

AllocationPlan load_plan(const std::string& path) {
  return plan_from_json(parse_json(read_file(path), path));
}

std::vector<Request> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_trace(in);
}

std::vector<MembershipEvent> load_events(const std::string& path,
                                         const RunConfig& c) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_events(in, c.reserve_fraction);
}

void require_plan_fits(const AllocationPlan& plan,
                       const ClusterSnapshot& cluster, const ModelSpec& model) {
  if (std::string why = check_plan(plan, cluster, model, false); !why.empty()) {
    throw InputError("plan does not fit the cluster: " + why);
  }
}

std::string plan_tables(const AllocationPlan& plan) {
  std::ostringstream os;
  os << "replicas " << plan.replication_count << ", stages "
     << plan.stage_total << ", objective " << plan.objective_score << "\n\n";
  os << std::left << std::setw(10) << "pipeline" << std::setw(12) << "region"
     << std::setw(16) << "gpu" << "layers\n";
  for (std::size_t p = 0; p < plan.pipelines.size(); ++p) {
    for (const auto& s : plan.pipelines[p].stages) {
      os << std::setw(10) << p << std::setw(12) << plan.pipelines[p].region
         << std::setw(16) << s.gpu_id << s.start_layer << '-' << s.end_layer
         << '\n';
    }
  }
  os << '\n'
     << std::setw(12) << "region" << std::setw(6) << "k" << std::setw(8)
     << "s*" << "Z(k)\n";
  for (const auto& e : plan.per_k) {
    os << std::setw(12) << e.region << std::setw(6) << e.k << std::setw(8)
       << e.s_star << e.z << '\n';
  }
  return os.str();
}

std::string metrics_summary(const MetricsReport& m) {
  std::ostringstream os;
  os << "completed " << m.completed << "/" << m.total << ", rejected "
     << m.rejected << ", in flight " << m.in_flight << '\n'
     << "throughput " << m.throughput_rps << " req/s\n"
     << "latency avg " << m.latency_avg << " s, p95 " << m.latency_p95
     << " s, p99 " << m.latency_p99 << " s, p100 " << m.latency_p100
     << " s\n";
  for (const auto& e : m.events) os << "  t=" << e.at << "  " << e.what << '\n';
  return os.str();
}

std::string config_footer() {
  std::ostringstream os;
  const RunConfig defaults;
  std::istringstream values(format_config(defaults));
  os << "Config file keys (key = value; flags > file > defaults):\n";
  std::string line;
  for (const auto& f : config_fields()) {
    std::getline(values, line);
    os << "  " << std::left << std::setw(34) << line << f.help << " ("
       << f.range << ")\n";
  }
  os << "\nExit codes: 0 success, 2 input error, 3 infeasible.";
  return os.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Layer placement and request routing for a swarm of "
               "heterogeneous GPUs, plus a deterministic serving simulator."};
  app.name("decserve");
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(config_footer());

  Globals g;
  ConfigOptions o;
  app.add_option("--config", g.config_path, "TOML-style config file");
  o.seed = app.add_option("--seed", g.seed, "random seed (default 0)");
  app.add_option("--out", g.out_path, "write the main output here");
  app.add_flag("--json", g.json, "machine-readable stdout");
  o.alpha = app.add_option("--alpha", g.flags.alpha,
                           "exponent on k in Z(k) (default 1)");
  o.mix_alpha = app.add_option("--mix-alpha", g.flags.mix_alpha,
                               "memory weight in layer load (default 0.5)");
  o.cov_threshold = app.add_option("--cov-threshold", g.flags.cov_threshold,
                                   "rebalance CoV threshold (default 0.5)");
  o.publish_interval =
      app.add_option("--publish-interval", g.flags.publish_interval_s,
                     "perf publish period in s (default 1.5)");
  o.ttl_multiplier = app.add_option("--ttl-multiplier", g.flags.ttl_multiplier,
                                    "TTL in publish periods (default 3)");
  o.reserve_fraction =
      app.add_option("--reserve-fraction", g.flags.reserve_fraction,
                     "VRAM reserve when a GPU omits it (default 0.2)");
  o.contention_exponent =
      app.add_option("--contention-exponent", g.flags.contention_exponent,
                     "occupancy slowdown exponent (default 1)");
  o.amortize_rtt = app.add_flag("--amortize-rtt", g.flags.amortize_rtt,
                                "charge link latency once per request");

  std::string cluster_path, model_path, plan_path, trace_path, events_path,
      perf_path, profile = "sharegpt";
  bool baseline = false;
  int sessions = 1;
  double rate = 1.0;
  std::size_t count = 100;
  double at = 0.0;
  std::vector<int> gpu_counts = BenchOptions{}.gpu_counts;
  int routings = 1000;
  int layers = 64;

  auto* allocate_cmd = app.add_subcommand("allocate", "compute a placement plan");
  allocate_cmd->add_option("--cluster", cluster_path, "cluster JSON")->required();
  allocate_cmd->add_option("--model", model_path, "model JSON")->required();

  auto* route_cmd =
      app.add_subcommand("route", "route sessions over a perf-map dump");
  route_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  route_cmd->add_option("--perf", perf_path, "perf dump (JSON lines)")->required();
  route_cmd->add_option("--sessions", sessions, "sessions to route")
      ->check(CLI::PositiveNumber);

  auto* sim_cmd = app.add_subcommand("simulate", "replay a trace");
  sim_cmd->add_option("--cluster", cluster_path, "cluster JSON")->required();
  sim_cmd->add_option("--model", model_path, "model JSON")->required();
  sim_cmd->add_option("--plan", plan_path, "plan JSON (allocated if absent)");
  sim_cmd->add_option("--trace", trace_path, "trace (JSON lines)")->required();
  sim_cmd->add_option("--events", events_path, "membership events (JSON lines)");
  sim_cmd->add_flag("--baseline", baseline, "use the baseline plan instead");

  auto* bench_cmd = app.add_subcommand("bench", "scheduler scaling benchmark");
  bench_cmd->add_option("--gpus", gpu_counts, "cluster sizes");
  bench_cmd->add_option("--routings", routings, "routings per size")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--layers", layers, "model layers")
      ->check(CLI::PositiveNumber);

  auto* dump_cmd = app.add_subcommand("dump-perf", "print live perf entries");
  dump_cmd->add_option("--cluster", cluster_path, "cluster JSON")->required();
  dump_cmd->add_option("--model", model_path, "model JSON")->required();
  dump_cmd->add_option("--plan", plan_path, "plan JSON (allocated if absent)");
  dump_cmd->add_option("--events", events_path, "membership events applied first");
  dump_cmd->add_option("--at", at, "time of the dump in s (default 0)");

  auto* trace_cmd = app.add_subcommand("gen-trace", "synthesize a trace");
  trace_cmd->add_option("--profile", profile, "sharegpt or wildgpt")
      ->check(CLI::IsMember(trace_profile_names()));
  trace_cmd->add_option("--rate", rate, "arrivals per second")
      ->check(CLI::PositiveNumber);
  trace_cmd->add_option("--count", count, "requests");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    const RunConfig config = resolve_config(g, o);

    if (allocate_cmd->parsed()) {
      const ClusterSnapshot cluster = load_cluster(cluster_path, config);
      const ModelSpec model = load_model(model_path);
      const AllocationPlan plan =
          allocate(cluster, model, allocator_settings(config));
      emit(g, out, plan_to_json(plan).dump(2) + "\n", plan_tables(plan));
    } else if (route_cmd->parsed()) {
      const AllocationPlan plan = load_plan(plan_path);
      std::ifstream in(perf_path);
      if (!in) throw InputError("cannot open " + perf_path);
      const std::vector<DumpRecord> dump = read_perf_dump(in);
      PerfMap perf(plan.layer_count(), sim_config(config).perf);
      auto ensure = [&](const GpuId& id) {
        if (!perf.is_registered(id)) perf.register_gpu(id);
      };
      for (const auto& r : dump) {
        ensure(r.key.gpu);
        if (r.key.kind == PerfKey::Kind::kLinkRtt) ensure(r.key.peer);
      }
      for (const auto& r : dump) {
        if (r.key.kind == PerfKey::Kind::kLayerLatency) {
          perf.set_base_latency(r.key.gpu, r.key.layer, r.key.layer, r.value);
        }
        perf.publish(r.key, r.value, -r.age_s);
      }
      Router router(perf);
      const std::vector<LayerSlice> placement = plan.slices();
      std::ostringstream lines;
      std::ostringstream table;
      for (int i = 0; i < sessions; ++i) {
        PipelineChain chain =
            router.route_request("s" + std::to_string(i), placement, 0.0);
        lines << chain_to_json(chain).dump() << '\n';
        table << chain.session_id << "  " << chain.predicted_latency << " s ";
        for (const auto& h : chain.hops) {
          table << " " << h.gpu_id << "[" << h.start_layer << "-"
                << h.end_layer << "]";
        }
        table << '\n';
      }
      emit(g, out, lines.str(), table.str());
    } else if (sim_cmd->parsed()) {
      const ClusterSnapshot cluster = load_cluster(cluster_path, config);
      const ModelSpec model = load_model(model_path);
      AllocationPlan plan;
      if (baseline) {
        plan = baseline_plan(cluster, model);
      } else if (!plan_path.empty()) {
        plan = load_plan(plan_path);
        require_plan_fits(plan, cluster, model);
      } else {
        plan = allocate(cluster, model, allocator_settings(config));
      }
      const std::vector<Request> trace = load_trace(trace_path);
      const std::vector<MembershipEvent> events =
          load_events(events_path, config);
      const MetricsReport m = run_simulation(plan, cluster, model, trace,
                                             events, config.seed,
                                             sim_config(config));
      emit(g, out, metrics_to_json(m).dump(2) + "\n", metrics_summary(m));
    } else if (bench_cmd->parsed()) {
      BenchOptions b;
      b.gpu_counts = gpu_counts;
      b.routings = routings;
      b.layers = layers;
      b.seed = config.seed;
      b.allocator = allocator_settings(config);
      const std::vector<BenchPoint> points = run_bench(b);
      std::ostringstream csv;
      write_bench_csv(csv, points);
      std::ostringstream table;
      table << std::left << std::setw(7) << "gpus" << std::setw(10)
            << "replicas" << std::setw(14) << "phase1_ms" << std::setw(18)
            << "phase2_ms/req" << std::setw(14) << "edges/route"
            << "L*R^2\n";
      for (const auto& p : points) {
        table << std::setw(7) << p.gpus << std::setw(10) << p.replicas
              << std::setw(14) << p.phase1_ms << std::setw(18)
              << p.phase2_ms_per_req << std::setw(14) << p.edges_per_route
              << p.predicted_edges << '\n';
      }
      emit(g, out, csv.str(), table.str());
    } else if (dump_cmd->parsed()) {
      const ClusterSnapshot cluster = load_cluster(cluster_path, config);
      const ModelSpec model = load_model(model_path);
      const AllocationPlan plan =
          plan_path.empty() ? allocate(cluster, model, allocator_settings(config))
                            : load_plan(plan_path);
      if (!plan_path.empty()) require_plan_fits(plan, cluster, model);
      const SimConfig sc = sim_config(config);
      PerfMap perf(model.layer_count, sc.perf);
      MembershipManager manager(cluster, model, plan, perf, sc.membership);
      manager.bootstrap(0.0);
      for (const auto& e : load_events(events_path, config)) {
        if (e.at > at) break;
        if (e.kind == MembershipEvent::Kind::kJoin) {
          try {
            manager.on_join(e.gpu, e.at);
          } catch (const ZeroCapacity&) {
          }
        } else {
          if (manager.on_leave(e.gpu_id, e.at).action ==
              RebalanceAction::kGlobal) {
            try {
              manager.global_rebalance(e.at);
            } catch (const NoFeasiblePipeline&) {
            }
          }
        }
      }
      manager.publish_all(at);
      const auto records = perf.dump(at);
      std::ostringstream lines;
      write_perf_dump(lines, records);
      emit(g, out, lines.str(),
           "wrote " + std::to_string(records.size()) + " entries\n");
    } else if (trace_cmd->parsed()) {
      std::ostringstream lines;
      write_trace(lines, generate_trace(trace_profile(profile), rate, count,
                                        config.seed));
      emit(g, out, lines.str(),
           "wrote " + std::to_string(count) + " requests\n");
    }
    return kExitOk;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const UncoveredLayer& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const NoPath& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace decserve
