#pragma once

#include "driftsel/drift.hpp"
#include "driftsel/stream.hpp"
#include "driftsel/synth.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace driftsel {

/// A fully resolved benchmark run. Unknown config keys are rejected.
struct RunConfig {
  SynthSchema schema;
  std::vector<PlanRecord> templates;
  int n_buckets = 3;
  std::vector<PipelineConfig> pipelines;
  nlohmann::json drift;  // raw schedule config; resolved against n_steps
  std::int64_t n_steps = 0;
  std::int64_t warmup = 0;
  std::int64_t rolling_window = 0;  // 0 resolves to max(n/60, 1)
  std::uint64_t seed = 0;
  std::string output_dir;

  nlohmann::json raw;  // canonical form, embedded in state snapshots

  DriftSchedule schedule() const;
  std::size_t resolved_rolling_window() const;
};

/// Parses a config document. Relative schema/template paths resolve against
/// base_dir.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

/// Restricts the run to one strategy: "none" | "global" | "per-join" |
/// "model:<pipeline name>" (the CLI --strategy flag).
void apply_strategy_override(RunConfig& config, const std::string& strategy);

}  // namespace driftsel
