#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Process-level tests of the CLI surface: subcommands, exit codes, and the
// EXPLAIN import golden files.

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef DRIFTSEL_BIN
#error "DRIFTSEL_BIN must point at the driftsel executable"
#endif
#ifndef DRIFTSEL_SOURCE_DIR
#error "DRIFTSEL_SOURCE_DIR must point at the repository root"
#endif

namespace {

const std::string kBin = DRIFTSEL_BIN;
const fs::path kSourceDir = DRIFTSEL_SOURCE_DIR;

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run(const std::string& args) {
  const fs::path out_file = fs::temp_directory_path() / "driftsel_cli_stdout.txt";
  const std::string cmd = kBin + " " + args + " > " + out_file.string() + " 2>/dev/null";
  int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  result.stdout_text = ss.str();
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json demo_config(const fs::path& out_dir, int n_steps = 400) {
  json cfg = json::parse(slurp(kSourceDir / "configs" / "demo_run.json"));
  cfg["schema"] = (kSourceDir / "configs" / "demo_schema.json").string();
  cfg["templates"] = (kSourceDir / "configs" / "demo_templates.jsonl").string();
  cfg["n_steps"] = n_steps;
  cfg["warmup"] = 100;
  cfg["rolling_window"] = 20;
  cfg["output"] = out_dir.string();
  return cfg;
}

fs::path write_config(const TempDir& dir, const json& cfg, const std::string& name = "run.json") {
  fs::path path = dir.path / name;
  std::ofstream out(path);
  out << cfg.dump(2);
  return path;
}

}  // namespace

TEST_CASE("explain import golden files") {
  for (const std::string name : {"scan", "join1", "join3"}) {
    const fs::path fixture = kSourceDir / "tests" / "fixtures" / ("explain_" + name + ".json");
    const fs::path golden = kSourceDir / "tests" / "fixtures" / ("golden_" + name + ".jsonl");
    const fs::path out = fs::temp_directory_path() / ("driftsel_golden_" + name + ".jsonl");
    auto result = run("import-explain " + fixture.string() + " --out " + out.string());
    REQUIRE(result.exit_code == 0);
    CHECK(slurp(out) == slurp(golden));
    fs::remove(out);
  }
}

TEST_CASE("import-explain rejects a non-ANALYZE document with exit code 3") {
  TempDir dir("driftsel_cli_noanalyze");
  fs::path doc = dir.path / "plain.json";
  std::ofstream(doc) << R"([{"Plan":{"Node Type":"Seq Scan","Relation Name":"t","Plan Rows":5}}])";
  auto result = run("import-explain " + doc.string());
  CHECK(result.exit_code == 3);
}

TEST_CASE("bench runs the demo config and writes reports") {
  TempDir dir("driftsel_cli_bench");
  fs::path cfg = write_config(dir, demo_config(dir.path / "out"));
  auto result = run("bench --config " + cfg.string());
  REQUIRE(result.exit_code == 0);
  CHECK(fs::exists(dir.path / "out" / "linear.csv"));
  CHECK(fs::exists(dir.path / "out" / "summary.json"));
  json summary = json::parse(slurp(dir.path / "out" / "summary.json"));
  CHECK(summary.at("pipelines").contains("global"));
}

TEST_CASE("bench with a config error exits 2") {
  TempDir dir("driftsel_cli_badcfg");
  json cfg = demo_config(dir.path / "out");
  cfg["no_such_key"] = 1;
  fs::path path = write_config(dir, cfg);
  CHECK(run("bench --config " + path.string()).exit_code == 2);

  CHECK(run("bench --config " + (dir.path / "missing.json").string()).exit_code == 2);
}

TEST_CASE("bench strategy override selects a single pipeline") {
  TempDir dir("driftsel_cli_strategy");
  fs::path cfg = write_config(dir, demo_config(dir.path / "out"));
  auto result = run("bench --config " + cfg.string() + " --strategy global");
  REQUIRE(result.exit_code == 0);
  CHECK(fs::exists(dir.path / "out" / "global.csv"));
  CHECK(!fs::exists(dir.path / "out" / "linear.csv"));

  CHECK(run("bench --config " + cfg.string() + " --strategy bogus").exit_code == 2);
}

TEST_CASE("synth writes a loadable snapshot") {
  TempDir dir("driftsel_cli_synth");
  auto result = run("synth --schema " + (kSourceDir / "configs" / "demo_schema.json").string() +
                    " --out " + (dir.path / "db.bin").string());
  REQUIRE(result.exit_code == 0);
  CHECK(fs::file_size(dir.path / "db.bin") > 1000);
  // malformed schema -> data error
  fs::path bad = dir.path / "bad.json";
  std::ofstream(bad) << R"({"seed": 1, "relations": []})";
  CHECK(run("synth --schema " + bad.string() + " --out " + (dir.path / "x.bin").string())
            .exit_code == 3);
}

TEST_CASE("report prints stats and downsamples") {
  TempDir dir("driftsel_cli_report");
  fs::path cfg = write_config(dir, demo_config(dir.path / "out"));
  REQUIRE(run("bench --config " + cfg.string() + " --strategy global").exit_code == 0);
  fs::path csv = dir.path / "out" / "global.csv";
  fs::path small = dir.path / "small.csv";
  auto result = run("report " + csv.string() + " --downsample " + small.string() + " --rows 50");
  REQUIRE(result.exit_code == 0);
  json stats = json::parse(result.stdout_text);
  CHECK(stats.at("rows").get<int>() == 400);
  CHECK(stats.at("q_corrected").at("median").get<double>() >= 1.0);
  // downsampled file has the header plus ~50 rows
  std::ifstream in(small);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines >= 45);
  CHECK(lines <= 60);
}

TEST_CASE("state snapshot: suspend, inspect, load, resume") {
  TempDir dir("driftsel_cli_state");
  fs::path cfg = write_config(dir, demo_config(dir.path / "full"));
  REQUIRE(run("bench --config " + cfg.string()).exit_code == 0);

  json part_cfg = demo_config(dir.path / "part");
  fs::path part_path = write_config(dir, part_cfg, "part.json");
  fs::path snap = dir.path / "snap.json";
  REQUIRE(run("bench --config " + part_path.string() + " --stop-after 150 --save-state " +
              snap.string())
              .exit_code == 0);

  auto dump = run("state dump --in " + snap.string());
  REQUIRE(dump.exit_code == 0);
  json info = json::parse(dump.stdout_text);
  CHECK(info.at("step").get<int>() == 150);

  fs::path reloaded = dir.path / "snap2.json";
  auto load = run("state load --in " + snap.string() + " --out " + reloaded.string());
  REQUIRE(load.exit_code == 0);
  CHECK(json::parse(slurp(snap)) == json::parse(slurp(reloaded)));

  REQUIRE(run("bench --config " + part_path.string() + " --resume " + snap.string())
              .exit_code == 0);
  for (const std::string name : {"global", "linear", "fm", "bayes", "batch"}) {
    CHECK(slurp(dir.path / "full" / (name + ".csv")) ==
          slurp(dir.path / "part" / (name + ".csv")));
  }
  CHECK(slurp(dir.path / "full" / "summary.json") == slurp(dir.path / "part" / "summary.json"));

  // a non-state file is a config error
  CHECK(run("state dump --in " + part_path.string()).exit_code == 2);
}

TEST_CASE("bench repeated with the same config and seed is byte-identical") {
  TempDir dir("driftsel_cli_det");
  fs::path cfg_a = write_config(dir, demo_config(dir.path / "a"), "a.json");
  fs::path cfg_b = write_config(dir, demo_config(dir.path / "b"), "b.json");
  REQUIRE(run("bench --config " + cfg_a.string()).exit_code == 0);
  REQUIRE(run("bench --config " + cfg_b.string()).exit_code == 0);
  for (const std::string name : {"global", "linear", "fm", "bayes", "batch"}) {
    CHECK(slurp(dir.path / "a" / (name + ".csv")) == slurp(dir.path / "b" / (name + ".csv")));
  }
}
