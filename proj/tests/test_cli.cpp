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

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "decserve/cli.hpp"
#include "decserve/io.hpp"
#include "doctest.h"

using namespace decserve;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string desk(const std::string& file) {
  return std::string(DECSERVE_SOURCE_DIR) + "/configs/desk/" + file;
}

struct TempDir {
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("decserve-cli-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(file(name)) << text;
    return file(name);
  }
  fs::path path;
};

std::string slurp(const std::string& path) { return read_file(path); }

}  // namespace

TEST_CASE("allocate writes a plan") {
  TempDir dir;
  const auto r = cli({"allocate", "--cluster", desk("cluster.json"), "--model",
                      desk("model.json"), "--out", dir.file("plan.json")});
  CHECK(r.code == kExitOk);
  const auto plan = plan_from_json(parse_json(slurp(dir.file("plan.json")), "p"));
  CHECK(plan.replication_count >= 1);
  CHECK_FALSE(r.out.empty());
}

TEST_CASE("a model too large for every region exits 3") {
  TempDir dir;
  const auto model = dir.write(
      "huge.json",
      R"({"name":"huge","layer_count":400,"bytes_per_layer":1e9,"flops_per_layer_per_token":1e9})");
  const auto r =
      cli({"allocate", "--cluster", desk("cluster.json"), "--model", model});
  CHECK(r.code == kExitInfeasible);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("malformed input exits 2 with a location") {
  TempDir dir;
  const auto bad = dir.write("bad.json", "{\n  \"gpus\": [\n    {\"id\": }\n]}");
  const auto r = cli({"allocate", "--cluster", bad, "--model", desk("model.json")});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("line 3, column") != std::string::npos);

  CHECK(cli({"allocate", "--cluster", dir.file("missing.json"), "--model",
             desk("model.json")})
            .code == kExitInput);
  CHECK(cli({"frobnicate"}).code == kExitInput);
  CHECK(cli({}).code == kExitInput);
  CHECK(cli({"allocate", "--cluster"}).code == kExitInput);
}

TEST_CASE("help documents every config field") {
  const auto r = cli({"--help"});
  CHECK(r.code == kExitOk);
  const std::string text = r.out + r.err;
  for (const char* key :
       {"alpha", "mix_alpha", "cov_threshold", "publish_interval_s",
        "ttl_multiplier", "reserve_fraction", "seed", "contention_exponent",
        "amortize_rtt"}) {
    CHECK_MESSAGE(text.find(key) != std::string::npos, key);
  }
  CHECK(text.find("exit") != std::string::npos);
}

TEST_CASE("simulate") {
  TempDir dir;
  CHECK(cli({"gen-trace", "--profile", "sharegpt", "--rate", "0.5", "--count",
             "40", "--seed", "3", "--out", dir.file("t.jsonl")})
            .code == kExitOk);
  auto run = [&](const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"simulate", "--cluster", desk("cluster.json"),
                                     "--model", desk("model.json"), "--trace",
                                     dir.file("t.jsonl"), "--seed", "7", "--out",
                                     dir.file(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args).code;
  };

  SUBCASE("twice gives identical files") {
    REQUIRE(run("a.json") == kExitOk);
    REQUIRE(run("b.json") == kExitOk);
    CHECK(slurp(dir.file("a.json")) == slurp(dir.file("b.json")));
    const auto j = parse_json(slurp(dir.file("a.json")), "m");
    CHECK(j.at("total") == 40);
  }
  SUBCASE("baseline differs") {
    REQUIRE(run("a.json") == kExitOk);
    REQUIRE(run("base.json", {"--baseline"}) == kExitOk);
    CHECK(slurp(dir.file("a.json")) != slurp(dir.file("base.json")));
  }
  SUBCASE("a supplied plan is used") {
    REQUIRE(cli({"allocate", "--cluster", desk("cluster.json"), "--model",
                 desk("model.json"), "--out", dir.file("plan.json")})
                .code == kExitOk);
    REQUIRE(run("a.json") == kExitOk);
    REQUIRE(run("p.json", {"--plan", dir.file("plan.json")}) == kExitOk);
    CHECK(slurp(dir.file("a.json")) == slurp(dir.file("p.json")));
  }
  SUBCASE("missing trace exits 2") {
    CHECK(cli({"simulate", "--cluster", desk("cluster.json"), "--model",
               desk("model.json"), "--trace", dir.file("nope.jsonl")})
              .code == kExitInput);
  }
  SUBCASE("membership events") {
    dir.write("ev.jsonl",
              R"({"t":5,"event":"leave","gpu_id":"a-5090-1"})"
              "\n"
              R"({"t":9,"event":"join","gpu":{"id":"c-5090-1","region":"A","vram_bytes":32e9,"flops":3.6e12}})"
              "\n");
    REQUIRE(run("e.json", {"--events", dir.file("ev.jsonl")}) == kExitOk);
    const auto j = parse_json(slurp(dir.file("e.json")), "m");
    CHECK(j.at("events").size() >= 2);
    CHECK(j.at("completed").get<int>() + j.at("rejected").get<int>() +
              j.at("in_flight").get<int>() ==
          40);
  }
}

TEST_CASE("flags override the config file") {
  TempDir dir;
  const auto conf = dir.write("run.conf", "alpha = 2\n");
  const auto bogus = dir.write("bogus.conf", "alhpa = 2\n");
  // A short model so every region fits several replicas and alpha matters.
  const auto small = dir.write(
      "small.json",
      R"({"name":"small","layer_count":16,"bytes_per_layer":1e9,)"
      R"("flops_per_layer_per_token":1e9})");
  auto plan = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"--json"};
    args.insert(args.end(), extra.begin(), extra.end());
    for (const char* a : {"allocate", "--cluster"}) args.push_back(a);
    args.push_back(desk("cluster.json"));
    args.push_back("--model");
    args.push_back(small);
    const auto r = cli(args);
    REQUIRE(r.code == kExitOk);
    return parse_json(r.out, "plan").at("objective").get<double>();
  };
  const double file2 = plan({"--config", conf});
  const double flag2 = plan({"--alpha", "2"});
  const double flag3 = plan({"--alpha", "3"});
  const double both = plan({"--config", conf, "--alpha", "3"});
  CHECK(file2 == flag2);
  CHECK(both == flag3);
  CHECK(file2 != plan({}));
  CHECK(cli({"--config", bogus, "allocate", "--cluster", desk("cluster.json"),
             "--model", desk("model.json")})
            .code == kExitInput);
  CHECK(cli({"--alpha", "-1", "allocate", "--cluster", desk("cluster.json"),
             "--model", desk("model.json")})
            .code == kExitInput);
}

TEST_CASE("dump-perf feeds route") {
  TempDir dir;
  REQUIRE(cli({"allocate", "--cluster", desk("cluster.json"), "--model",
               desk("model.json"), "--out", dir.file("plan.json")})
              .code == kExitOk);
  REQUIRE(cli({"dump-perf", "--cluster", desk("cluster.json"), "--model",
               desk("model.json"), "--plan", dir.file("plan.json"), "--out",
               dir.file("perf.jsonl")})
              .code == kExitOk);
  const auto r = cli({"route", "--plan", dir.file("plan.json"), "--perf",
                      dir.file("perf.jsonl"), "--sessions", "4", "--json"});
  REQUIRE(r.code == kExitOk);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = parse_json(line, "chain");
    CHECK(j.at("hops").size() >= 1);
    ++n;
  }
  CHECK(n == 4);

  // Routing an empty dump finds nothing live.
  dir.write("empty.jsonl", "");
  CHECK(cli({"route", "--plan", dir.file("plan.json"), "--perf",
             dir.file("empty.jsonl")})
            .code == kExitInfeasible);
}

TEST_CASE("bench emits a csv row per size") {
  TempDir dir;
  const auto r = cli({"bench", "--gpus", "4", "8", "--routings", "20", "--out",
                      dir.file("bench.csv")});
  REQUIRE(r.code == kExitOk);
  std::istringstream csv(slurp(dir.file("bench.csv")));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("gen-trace is deterministic in the seed") {
  auto gen = [](const char* seed) {
    return cli({"gen-trace", "--profile", "wildgpt", "--rate", "1", "--count",
                "10", "--seed", seed})
        .out;
  };
  CHECK(gen("1") == gen("1"));
  CHECK(gen("1") != gen("2"));
  CHECK(cli({"gen-trace", "--profile", "nope"}).code == kExitInput);
}

#ifdef DECSERVE_CLI_PATH
TEST_CASE("the binary reports exit codes to the shell") {
  auto status = [](const std::string& args) {
    const std::string cmd = std::string(DECSERVE_CLI_PATH) + " " + args +
                            " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("--help") == 0);
  CHECK(status("allocate --cluster " + desk("cluster.json") + " --model " +
               desk("model.json")) == 0);
  CHECK(status("allocate --cluster /nonexistent --model " + desk("model.json")) ==
        2);
}
#endif
