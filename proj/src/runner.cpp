#include "driftsel/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace driftsel {

using nlohmann::json;
namespace fs = std::filesystem;

json distribution_stats(std::vector<Real> values) {
  if (values.empty()) return {{"count", 0}};
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  auto percentile = [&](Real p) {
    const std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<Real>(n)));
    return values[std::min(n - 1, rank > 0 ? rank - 1 : 0)];
  };
  Real sum = 0.0;
  for (Real v : values) sum += v;
  return {{"count", n},
          {"mean", sum / static_cast<Real>(n)},
          {"median", percentile(0.5)},
          {"p95", percentile(0.95)},
          {"p99", percentile(0.99)},
          {"max", values.back()}};
}

namespace {

std::vector<std::int64_t> segment_bounds(const RunConfig& config) {
  const DriftSchedule sched = config.schedule();
  std::vector<std::int64_t> bounds;
  if (sched.mode == DriftSchedule::Mode::Hard) {
    bounds = sched.hard.switch_points;
  } else {
    // soft drift: boundaries at the midpoints between adjacent centers
    const auto& centers = sched.soft.centers;
    for (std::size_t b = 0; b + 1 < centers.size(); ++b) {
      Real mid = (centers[b] + centers[b + 1]) / 2.0;
      if (sched.soft.normalized) mid *= static_cast<Real>(config.n_steps);
      bounds.push_back(static_cast<std::int64_t>(std::llround(mid)));
    }
  }
  bounds.erase(std::remove_if(bounds.begin(), bounds.end(),
                              [&](std::int64_t b) { return b <= 0 || b >= config.n_steps; }),
               bounds.end());
  return bounds;
}

}  // namespace

json summarize(const RunConfig& config, const std::vector<Pipeline>& pipelines) {
  const std::vector<std::int64_t> bounds = segment_bounds(config);
  json out;
  out["n_steps"] = config.n_steps;
  out["seed"] = config.seed;
  out["segment_bounds"] = bounds;
  json per_pipeline = json::object();
  for (const Pipeline& p : pipelines) {
    json entry;
    entry["strategy"] = strategy_name(p.config().strategy);
    entry["q_raw"] = distribution_stats(p.q_raw_history());
    entry["q_corrected"] = distribution_stats(p.q_corrected_history());
    json segments = json::array();
    std::vector<std::int64_t> edges = bounds;
    edges.insert(edges.begin(), 0);
    edges.push_back(config.n_steps);
    const auto& q = p.q_corrected_history();
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
      const auto from = static_cast<std::size_t>(edges[s]);
      const auto to = std::min(static_cast<std::size_t>(edges[s + 1]), q.size());
      std::vector<Real> slice;
      if (from < to) slice.assign(q.begin() + from, q.begin() + to);
      json seg = distribution_stats(std::move(slice));
      seg["from"] = edges[s];
      seg["to"] = edges[s + 1];
      segments.push_back(std::move(seg));
    }
    entry["segments"] = std::move(segments);
    entry["diagnostics"] = p.diagnostics();
    per_pipeline[p.name()] = std::move(entry);
  }
  out["pipelines"] = std::move(per_pipeline);
  return out;
}

namespace {

constexpr int kStateVersion = 1;

json build_state(const RunConfig& config, const std::vector<Pipeline>& pipelines,
                 std::int64_t step) {
  json pipeline_states = json::object();
  for (const Pipeline& p : pipelines) pipeline_states[p.name()] = p.save_state();
  return {{"kind", "driftsel-state"},
          {"version", kStateVersion},
          {"step", step},
          {"config", config.raw},
          {"pipelines", pipeline_states}};
}

std::int64_t restore_state(const json& state, const RunConfig& config,
                           std::vector<Pipeline>& pipelines) {
  if (state.value("kind", "") != "driftsel-state") {
    throw ConfigError("state snapshot: not a driftsel state file");
  }
  if (state.value("version", -1) != kStateVersion) {
    throw ConfigError("state snapshot: unsupported version");
  }
  if (state.at("config") != config.raw) {
    throw ConfigError("state snapshot: config does not match the resumed run");
  }
  for (Pipeline& p : pipelines) {
    p.load_state(state.at("pipelines").at(p.name()));
  }
  return state.at("step").get<std::int64_t>();
}

}  // namespace

BenchResult run_benchmark(const RunConfig& config, const BenchOptions& options) {
  const SynthDatabase db = generate_database(config.schema);
  const BucketAssignment assignment = cluster_buckets(config.templates, config.n_buckets);
  const DriftSchedule schedule = config.schedule();
  const std::vector<WorkloadItem> stream = generate_workload(
      db, config.templates, assignment, schedule, config.n_steps, config.seed);

  const std::size_t window = config.resolved_rolling_window();
  std::vector<Pipeline> pipelines;
  pipelines.reserve(config.pipelines.size());
  for (const PipelineConfig& pc : config.pipelines) {
    pipelines.emplace_back(pc, config.seed, window);
  }

  std::int64_t start = 0;
  if (!options.resume_state_path.empty()) {
    std::ifstream in(options.resume_state_path);
    if (!in) throw ConfigError("cannot open state snapshot \"" + options.resume_state_path + "\"");
    json state;
    in >> state;
    start = restore_state(state, config, pipelines);
  } else {
    bool any_batch = false;
    for (const Pipeline& p : pipelines) any_batch |= p.is_batch();
    if (any_batch) {
      if (config.warmup < 2) {
        throw ConfigError("config: batch pipelines need warmup >= 2");
      }
      // Batch comparators train on bucket 0 only: an empty hard schedule
      // never leaves the first bucket.
      const std::vector<WorkloadItem> warm = generate_workload(
          db, config.templates, assignment, DriftSchedule::make_hard({}), config.warmup,
          substream_seed(config.seed, "warmup"));
      for (Pipeline& p : pipelines) {
        if (!p.is_batch()) continue;
        for (const WorkloadItem& item : warm) p.warm_observe(item.record);
        p.finish_warmup();
      }
    }
  }

  const std::int64_t stop =
      options.stop_after < 0 ? config.n_steps : std::min(options.stop_after, config.n_steps);
  if (start > stop) throw ConfigError("resume: snapshot is past the requested stop step");

  const bool write_files = !config.output_dir.empty();
  std::map<std::string, std::ofstream> csv;
  if (write_files) {
    fs::create_directories(config.output_dir);
    for (const Pipeline& p : pipelines) {
      const std::string path = config.output_dir + "/" + p.name() + ".csv";
      auto mode = start > 0 ? std::ios::app : std::ios::trunc;
      auto& out = csv[p.name()];
      out.open(path, mode);
      if (!out) throw ResourceError("cannot open \"" + path + "\" for writing");
      if (start == 0) out << kReportCsvHeader << "\n";
    }
  }

  BenchResult result;
  result.first_step = start;
  result.last_step = stop;
  for (const Pipeline& p : pipelines) result.pipelines[p.name()] = {};

  constexpr std::int64_t kSkipLogLimit = 20;
  for (std::int64_t t = start; t < stop; ++t) {
    const WorkloadItem& item = stream[static_cast<std::size_t>(t)];
    for (Pipeline& p : pipelines) {
      try {
        StreamRow row = p.step(item.record, t, item.bucket);
        if (write_files) csv[p.name()] << format_csv_row(row) << "\n";
        result.pipelines[p.name()].rows.push_back(row);
      } catch (const Error& e) {
        p.note_skipped();
        if (p.skipped() <= kSkipLogLimit) {
          std::cerr << "[driftsel] step " << t << " pipeline " << p.name() << " skipped: "
                    << e.what() << "\n";
        } else if (p.skipped() == kSkipLogLimit + 1) {
          std::cerr << "[driftsel] pipeline " << p.name()
                    << ": further skips suppressed (see the summary's skipped count)\n";
        }
      }
    }
  }
  for (auto& [name, out] : csv) out.flush();

  for (const Pipeline& p : pipelines) {
    result.pipelines[p.name()].diagnostics = p.diagnostics();
  }

  if (stop == config.n_steps) {
    result.summary = summarize(config, pipelines);
    if (write_files) {
      std::ofstream out(config.output_dir + "/summary.json");
      out << result.summary.dump(2) << "\n";
    }
  }

  if (!options.save_state_path.empty()) {
    std::ofstream out(options.save_state_path);
    if (!out) throw ResourceError("cannot open \"" + options.save_state_path + "\"");
    out << build_state(config, pipelines, stop).dump() << "\n";
  }

  if (!options.quiet) {
    std::cerr << "[driftsel] ran steps [" << start << ", " << stop << ") over "
              << pipelines.size() << " pipeline(s)\n";
  }
  return result;
}

std::vector<StreamRow> read_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open \"" + path + "\"");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("report csv: empty file");
  if (line != kReportCsvHeader) throw ParseError("report csv: unexpected header");
  std::vector<StreamRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StreamRow row;
    std::istringstream ss(line);
    std::string field;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw ParseError("report csv: short row");
      return field;
    };
    row.step = std::stoll(next());
    row.bucket = std::stoi(next());
    row.y = std::stoll(next());
    row.y_hat_raw = std::stod(next());
    row.y_hat_corrected = std::stod(next());
    row.z = std::stod(next());
    row.z_hat = std::stod(next());
    row.q_raw = std::stod(next());
    row.q_corrected = std::stod(next());
    row.q_raw_roll = std::stod(next());
    row.q_corrected_roll = std::stod(next());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace driftsel
