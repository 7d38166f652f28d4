#include "driftsel/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace driftsel {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open \"" + path + "\"");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in \"" + path + "\": " + e.what());
  }
  return doc;
}

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || path.front() == '/') return path;
  return base_dir + "/" + path;
}

std::vector<PlanRecord> load_templates_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open templates file \"" + path + "\"");
  std::vector<PlanRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_plan_jsonl(line));
    } catch (const Error& e) {
      throw ConfigError("templates file \"" + path + "\" line " + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
  return out;
}

PipelineConfig pipeline_from_json(const json& doc) {
  reject_unknown_keys(doc, {"name", "strategy", "learner", "batch", "encoder_prior_weight",
                            "factor_clamp"},
                      "pipeline");
  PipelineConfig cfg;
  cfg.name = doc.at("name").get<std::string>();
  const std::string strategy = doc.value("strategy", "model");
  auto parsed = strategy_from_name(strategy);
  if (!parsed) throw ConfigError("pipeline \"" + cfg.name + "\": unknown strategy \"" +
                                 strategy + "\"");
  cfg.strategy = *parsed;
  if (doc.contains("learner")) cfg.learner = doc.at("learner");
  cfg.batch = doc.value("batch", false);
  cfg.encoder_prior_weight = doc.value("encoder_prior_weight", 5.0);
  if (doc.contains("factor_clamp")) {
    const auto& clamp = doc.at("factor_clamp");
    if (!clamp.is_array() || clamp.size() != 2) {
      throw ConfigError("pipeline \"" + cfg.name + "\": factor_clamp must be [lo, hi]");
    }
    cfg.clamp.lo = clamp[0].get<Real>();
    cfg.clamp.hi = clamp[1].get<Real>();
  }
  if (cfg.strategy == CorrectionStrategy::Model && !doc.contains("learner")) {
    throw ConfigError("pipeline \"" + cfg.name + "\": model strategy needs a learner");
  }
  return cfg;
}

}  // namespace

DriftSchedule RunConfig::schedule() const {
  if (drift.is_null()) return DriftSchedule::make_hard({});
  reject_unknown_keys(drift, {"mode", "switch_fracs", "switch_points", "d", "centers",
                              "normalized"},
                      "drift");
  const std::string mode = drift.value("mode", "hard");
  if (mode == "hard") {
    std::vector<std::int64_t> points;
    if (drift.contains("switch_points")) {
      points = drift.at("switch_points").get<std::vector<std::int64_t>>();
    } else if (drift.contains("switch_fracs")) {
      for (Real f : drift.at("switch_fracs").get<std::vector<Real>>()) {
        points.push_back(static_cast<std::int64_t>(std::llround(f * static_cast<Real>(n_steps))));
      }
    }
    return DriftSchedule::make_hard(std::move(points));
  }
  if (mode == "soft") {
    DriftSchedule sched = DriftSchedule::make_soft(n_buckets, drift.value("d", 0.02));
    if (drift.contains("centers")) {
      sched.soft.centers = drift.at("centers").get<std::vector<Real>>();
    }
    sched.soft.normalized = drift.value("normalized", true);
    return sched;
  }
  throw ConfigError("drift: unknown mode \"" + mode + "\"");
}

std::size_t RunConfig::resolved_rolling_window() const {
  if (rolling_window > 0) return static_cast<std::size_t>(rolling_window);
  return static_cast<std::size_t>(std::max<std::int64_t>(n_steps / 60, 1));
}

RunConfig run_config_from_json(const json& doc, const std::string& base_dir) {
  reject_unknown_keys(doc,
                      {"schema", "templates", "buckets", "pipelines", "drift", "n_steps",
                       "warmup", "rolling_window", "seed", "output"},
                      "config");
  RunConfig cfg;

  const json& schema = doc.at("schema");
  cfg.schema = SynthSchema::from_json(
      schema.is_string() ? load_json_file(resolve_path(schema.get<std::string>(), base_dir))
                         : schema);

  const json& templates = doc.at("templates");
  if (templates.is_string()) {
    cfg.templates = load_templates_file(resolve_path(templates.get<std::string>(), base_dir));
  } else if (templates.is_array()) {
    for (const auto& t : templates) {
      cfg.templates.push_back(parse_plan_jsonl(t.dump()));
    }
  } else {
    throw ConfigError("config: templates must be a path or an array of records");
  }
  if (cfg.templates.empty()) throw ConfigError("config: no templates");

  cfg.n_buckets = doc.value("buckets", 3);
  if (cfg.n_buckets < 1) throw ConfigError("config: buckets must be >= 1");

  if (!doc.contains("pipelines") || !doc.at("pipelines").is_array() ||
      doc.at("pipelines").empty()) {
    throw ConfigError("config: pipelines must be a non-empty array");
  }
  std::set<std::string> names;
  for (const auto& p : doc.at("pipelines")) {
    cfg.pipelines.push_back(pipeline_from_json(p));
    if (!names.insert(cfg.pipelines.back().name).second) {
      throw ConfigError("config: duplicate pipeline name \"" + cfg.pipelines.back().name + "\"");
    }
  }

  if (doc.contains("drift")) cfg.drift = doc.at("drift");
  cfg.n_steps = doc.at("n_steps").get<std::int64_t>();
  if (cfg.n_steps <= 0) throw ConfigError("config: n_steps must be > 0");
  cfg.warmup = doc.value("warmup", 0);
  if (cfg.warmup < 0) throw ConfigError("config: warmup must be >= 0");
  cfg.rolling_window = doc.value("rolling_window", 0);
  if (!doc.contains("seed")) throw ConfigError("config: seed is required");
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.output_dir = doc.value("output", "");

  cfg.schedule();  // validate the drift block now

  json raw = doc;
  raw["schema"] = cfg.schema.to_json();
  json tpl = json::array();
  for (const PlanRecord& t : cfg.templates) tpl.push_back(json::parse(serialize_plan_jsonl(t)));
  raw["templates"] = std::move(tpl);
  cfg.raw = std::move(raw);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::string dir = ".";
  if (auto slash = path.find_last_of('/'); slash != std::string::npos) {
    dir = path.substr(0, slash);
  }
  return run_config_from_json(load_json_file(path), dir);
}

void apply_strategy_override(RunConfig& config, const std::string& strategy) {
  if (strategy.rfind("model:", 0) == 0) {
    const std::string name = strategy.substr(6);
    std::vector<PipelineConfig> kept;
    for (PipelineConfig& p : config.pipelines) {
      if (p.name == name) kept.push_back(std::move(p));
    }
    if (kept.empty()) throw ConfigError("--strategy: no pipeline named \"" + name + "\"");
    config.pipelines = std::move(kept);
    return;
  }
  auto parsed = strategy_from_name(strategy);
  if (!parsed || *parsed == CorrectionStrategy::Model) {
    throw ConfigError("--strategy: expected none, global, per-join, or model:<name>");
  }
  PipelineConfig p;
  p.name = strategy;
  p.strategy = *parsed;
  config.pipelines = {std::move(p)};
}

}  // namespace driftsel
