#include "driftsel/plan.hpp"
#include "driftsel/runner.hpp"
#include "driftsel/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using driftsel::Real;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw driftsel::ResourceError("cannot open \"" + path + "\"");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_synth(const std::string& schema_path, const std::string& out_path) {
  json doc = json::parse(read_file(schema_path));
  auto schema = driftsel::SynthSchema::from_json(doc);
  auto db = driftsel::generate_database(schema);
  driftsel::save_database(db, out_path);
  std::int64_t rows = 0;
  for (const auto& [name, rel] : db.relations()) rows += rel.row_count;
  std::cout << "wrote " << out_path << " (" << db.relations().size() << " relations, " << rows
            << " rows)\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& strategy,
              const std::string& output_override, std::int64_t stop_after,
              const std::string& save_state, const std::string& resume_state) {
  driftsel::RunConfig config = driftsel::load_run_config(config_path);
  if (!strategy.empty()) driftsel::apply_strategy_override(config, strategy);
  if (!output_override.empty()) config.output_dir = output_override;
  if (config.output_dir.empty()) {
    throw driftsel::ConfigError("bench: no output directory (config \"output\" or --output)");
  }
  driftsel::BenchOptions options;
  options.stop_after = stop_after;
  options.save_state_path = save_state;
  options.resume_state_path = resume_state;
  options.quiet = false;
  auto result = driftsel::run_benchmark(config, options);
  if (!result.summary.empty()) {
    for (const auto& [name, entry] : result.summary.at("pipelines").items()) {
      std::cout << name << ": median q_corrected = "
                << entry.at("q_corrected").at("median").get<Real>()
                << ", mean = " << entry.at("q_corrected").at("mean").get<Real>() << "\n";
    }
    std::cout << "reports in " << config.output_dir << "\n";
  } else {
    std::cout << "stopped after step " << result.last_step << "\n";
  }
  return 0;
}

int cmd_import_explain(const std::string& path, const std::string& out_path) {
  auto tree = driftsel::import_postgres_explain(read_file(path));
  std::string base = std::filesystem::path(path).stem().string();
  auto records = driftsel::enumerate_subplans(tree, base);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw driftsel::ResourceError("cannot open \"" + out_path + "\"");
    out = &file;
  }
  for (const auto& rec : records) {
    *out << driftsel::serialize_plan_jsonl(rec) << "\n";
  }
  return 0;
}

int cmd_report(const std::string& csv_path, const std::string& downsample_path,
               std::size_t target_rows) {
  auto rows = driftsel::read_report_csv(csv_path);
  if (rows.empty()) throw driftsel::ParseError("report: no rows in \"" + csv_path + "\"");
  std::vector<Real> q_raw, q_corr;
  for (const auto& row : rows) {
    q_raw.push_back(row.q_raw);
    q_corr.push_back(row.q_corrected);
  }
  json summary = {{"rows", rows.size()},
                  {"q_raw", driftsel::distribution_stats(q_raw)},
                  {"q_corrected", driftsel::distribution_stats(q_corr)}};
  std::cout << summary.dump(2) << "\n";
  if (!downsample_path.empty()) {
    const std::size_t stride = std::max<std::size_t>(rows.size() / target_rows, 1);
    std::ofstream out(downsample_path);
    if (!out) throw driftsel::ResourceError("cannot open \"" + downsample_path + "\"");
    out << driftsel::kReportCsvHeader << "\n";
    for (std::size_t i = 0; i < rows.size(); i += stride) {
      out << driftsel::format_csv_row(rows[i]) << "\n";
    }
  }
  return 0;
}

int cmd_state_dump(const std::string& path) {
  json state = json::parse(read_file(path));
  if (state.value("kind", "") != "driftsel-state") {
    throw driftsel::ConfigError("\"" + path + "\" is not a driftsel state snapshot");
  }
  json info = {{"version", state.at("version")},
               {"step", state.at("step")},
               {"pipelines", json::array()}};
  for (const auto& [name, p] : state.at("pipelines").items()) {
    info["pipelines"].push_back({{"name", name},
                                 {"strategy", p.at("strategy")},
                                 {"frozen", p.at("frozen")},
                                 {"encoder_updates", p.at("encoder").at("total")},
                                 {"vocabulary", p.at("vocab").size()}});
  }
  std::cout << info.dump(2) << "\n";
  return 0;
}

int cmd_state_load(const std::string& path, const std::string& out_path) {
  // Restores the snapshot into fresh pipelines, proving it loads, then
  // re-serializes it.
  json state = json::parse(read_file(path));
  if (state.value("kind", "") != "driftsel-state") {
    throw driftsel::ConfigError("\"" + path + "\" is not a driftsel state snapshot");
  }
  driftsel::RunConfig config = driftsel::run_config_from_json(state.at("config"));
  json reloaded = json::object();
  for (const driftsel::PipelineConfig& pc : config.pipelines) {
    driftsel::Pipeline pipeline(pc, config.seed, config.resolved_rolling_window());
    pipeline.load_state(state.at("pipelines").at(pc.name));
    reloaded[pc.name] = pipeline.save_state();
  }
  state["pipelines"] = std::move(reloaded);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw driftsel::ResourceError("cannot open \"" + out_path + "\"");
    out << state.dump() << "\n";
  }
  std::cout << "state snapshot ok (step " << state.at("step").get<std::int64_t>() << ", "
            << state.at("pipelines").size() << " pipelines)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftsel: online correction factors for cardinality estimates"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic database snapshot");
  std::string synth_schema, synth_out;
  synth->add_option("--schema", synth_schema, "schema JSON path")->required();
  synth->add_option("--out", synth_out, "output snapshot path")->required();

  auto* bench = app.add_subcommand("bench", "run the prequential benchmark");
  std::string bench_config, bench_strategy, bench_output, bench_save, bench_resume;
  std::int64_t bench_stop = -1;
  bench->add_option("--config", bench_config, "run config JSON path")->required();
  bench->add_option("--strategy", bench_strategy,
                    "restrict to one strategy: none, global, per-join, model:<name>");
  bench->add_option("--output", bench_output, "override the config's output directory");
  bench->add_option("--stop-after", bench_stop, "suspend after this many steps");
  bench->add_option("--save-state", bench_save, "write a state snapshot on exit");
  bench->add_option("--resume", bench_resume, "resume from a state snapshot");

  auto* import = app.add_subcommand("import-explain", "EXPLAIN (ANALYZE, FORMAT JSON) to plan JSONL");
  std::string import_file, import_out;
  import->add_option("file", import_file, "EXPLAIN JSON document")->required();
  import->add_option("--out", import_out, "output path (default stdout)");

  auto* report = app.add_subcommand("report", "summarize a report CSV");
  std::string report_csv, report_out;
  std::size_t report_rows = 600;
  report->add_option("csv", report_csv, "report CSV path")->required();
  report->add_option("--downsample", report_out, "write a plot-ready downsampled CSV here");
  report->add_option("--rows", report_rows, "target rows for the downsampled CSV");

  auto* state = app.add_subcommand("state", "inspect or reload state snapshots");
  state->require_subcommand(1);
  auto* state_dump = state->add_subcommand("dump", "print a snapshot overview");
  std::string dump_in;
  state_dump->add_option("--in", dump_in, "state snapshot path")->required();
  auto* state_load = state->add_subcommand("load", "load a snapshot and re-serialize it");
  std::string load_in, load_out;
  state_load->add_option("--in", load_in, "state snapshot path")->required();
  state_load->add_option("--out", load_out, "write the re-serialized snapshot here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_schema, synth_out);
    if (bench->parsed()) {
      return cmd_bench(bench_config, bench_strategy, bench_output, bench_stop, bench_save,
                       bench_resume);
    }
    if (import->parsed()) return cmd_import_explain(import_file, import_out);
    if (report->parsed()) return cmd_report(report_csv, report_out, report_rows);
    if (state_dump->parsed()) return cmd_state_dump(dump_in);
    if (state_load->parsed()) return cmd_state_load(load_in, load_out);
  } catch (const driftsel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const driftsel::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const driftsel::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
