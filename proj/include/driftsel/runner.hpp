#pragma once

#include "driftsel/config.hpp"
#include "driftsel/stream.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace driftsel {

struct BenchOptions {
  std::int64_t stop_after = -1;       // < 0 runs to n_steps
  std::string save_state_path;        // written when set
  std::string resume_state_path;      // resumed from when set
  bool quiet = true;
};

struct PipelineRows {
  std::vector<StreamRow> rows;
  nlohmann::json diagnostics;
};

struct BenchResult {
  nlohmann::json summary;  // empty object until a run reaches n_steps
  std::map<std::string, PipelineRows> pipelines;
  std::int64_t first_step = 0;
  std::int64_t last_step = 0;  // exclusive
};

/// Runs the full prequential benchmark: database, workload, optional batch
/// warm-up from bucket 0, then one strictly sequential loop per pipeline
/// over the shared record stream. Writes one CSV per pipeline plus
/// summary.json when output is configured.
BenchResult run_benchmark(const RunConfig& config, const BenchOptions& options = {});

/// Distribution statistics (mean/median/p95/p99/max, nearest-rank).
nlohmann::json distribution_stats(std::vector<Real> values);

/// Summary for a finished run, segmented at the schedule's drift boundaries.
nlohmann::json summarize(const RunConfig& config, const std::vector<Pipeline>& pipelines);

/// Parses a report CSV back into rows (used by `driftsel report` and tests).
std::vector<StreamRow> read_report_csv(const std::string& path);

}  // namespace driftsel
