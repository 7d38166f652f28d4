#include "driftsel/learners.hpp"

#include <nlohmann/json.hpp>

namespace driftsel {

using nlohmann::json;

namespace {

template <typename T>
T value_or(const json& cfg, const char* key, T fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  return it->get<T>();
}

void check_keys(const json& cfg, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : cfg.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("learner config: unknown key \"" + key + "\"");
  }
}

}  // namespace

std::unique_ptr<Regressor> make_regressor(const json& config, std::uint64_t seed) {
  if (!config.is_object() || !config.contains("type")) {
    throw ConfigError("learner config: expected an object with a \"type\" key");
  }
  const std::string type = config.at("type").get<std::string>();

  if (type == "linear") {
    check_keys(config, {"type", "learning_rate"});
    return std::make_unique<LinearSgdRegressor>(value_or<Real>(config, "learning_rate", 0.1));
  }
  if (type == "fm") {
    check_keys(config, {"type", "n_factors", "learning_rate", "init_scale"});
    return std::make_unique<FmRegressor>(value_or<int>(config, "n_factors", 10),
                                         value_or<Real>(config, "learning_rate", 0.1),
                                         value_or<Real>(config, "init_scale", 0.01), seed);
  }
  if (type == "mlp") {
    check_keys(config, {"type", "hidden", "learning_rate", "standardize"});
    MlpConfig cfg;
    cfg.hidden_sizes = value_or<std::vector<int>>(config, "hidden", {30, 30});
    cfg.learning_rate = value_or<Real>(config, "learning_rate", 0.01);
    cfg.standardize_inputs = value_or<bool>(config, "standardize", true);
    cfg.seed = seed;
    return std::make_unique<MlpRegressor>(fixed_feature_schema(), cfg);
  }
  if (type == "hoeffding_tree") {
    check_keys(config, {"type", "grace_period", "max_depth", "split_confidence", "tie_threshold",
                        "n_bins"});
    HoeffdingConfig cfg;
    cfg.grace_period = value_or<int>(config, "grace_period", 200);
    cfg.max_depth = value_or<int>(config, "max_depth", 5);
    cfg.split_confidence = value_or<Real>(config, "split_confidence", 1e-5);
    cfg.tie_threshold = value_or<Real>(config, "tie_threshold", 0.05);
    cfg.n_bins = value_or<int>(config, "n_bins", 16);
    return std::make_unique<HoeffdingTreeRegressor>(cfg);
  }
  if (type == "bayes_linear") {
    check_keys(config, {"type", "alpha", "beta", "gamma", "drift", "standardize"});
    BayesConfig cfg;
    cfg.alpha = value_or<Real>(config, "alpha", 1.0);
    cfg.beta = value_or<Real>(config, "beta", 1.0);
    cfg.gamma = value_or<Real>(config, "gamma", 0.7);
    cfg.drift = value_or<bool>(config, "drift", true);
    cfg.standardize_inputs = value_or<bool>(config, "standardize", true);
    return std::make_unique<BayesianLinearRegressor>(fixed_feature_schema(), cfg);
  }
  if (type == "batch_linear") {
    check_keys(config, {"type", "ridge"});
    return std::make_unique<BatchLinearRegressor>(fixed_feature_schema(),
                                                  value_or<Real>(config, "ridge", 1e-6));
  }
  throw ConfigError("learner config: unknown type \"" + type + "\"");
}

}  // namespace driftsel
