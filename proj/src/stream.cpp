#include "driftsel/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace driftsel {

using nlohmann::json;

Real q_error(Real y, Real y_hat) {
  if (!(y_hat > 0.0)) throw ValidationError("q_error: estimate must be > 0");
  const Real yc = std::max(y, 1.0);
  const Real yhc = std::max(y_hat, 1.0);
  return std::max(yc / yhc, yhc / yc);
}

RollingMean::RollingMean(std::size_t window) : window_(std::max<std::size_t>(window, 1)) {}

void RollingMean::push(Real v) {
  values_.push_back(v);
  sum_ += v;
  if (values_.size() > window_) {
    sum_ -= values_.front();
    values_.pop_front();
  }
}

Real RollingMean::mean() const {
  if (values_.empty()) return 0.0;
  return sum_ / static_cast<Real>(values_.size());
}

json RollingMean::save_state() const {
  return {{"window", window_}, {"values", std::vector<Real>(values_.begin(), values_.end())},
          {"sum", sum_}};
}

RollingMean RollingMean::from_state(const json& state) {
  RollingMean r(state.at("window").get<std::size_t>());
  for (Real v : state.at("values").get<std::vector<Real>>()) r.values_.push_back(v);
  r.sum_ = state.at("sum").get<Real>();
  return r;
}

std::vector<Real> rolling_mean(const std::vector<Real>& series, std::size_t window) {
  RollingMean acc(window);
  std::vector<Real> out;
  out.reserve(series.size());
  for (Real v : series) {
    acc.push(v);
    out.push_back(acc.mean());
  }
  return out;
}

const char* kReportCsvHeader =
    "step,bucket,y,y_hat_raw,y_hat_corrected,z,z_hat,q_raw,q_corrected,q_raw_roll,"
    "q_corrected_roll";

std::string format_csv_row(const StreamRow& row) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld,%d,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(row.step), row.bucket, static_cast<long long>(row.y),
                row.y_hat_raw, row.y_hat_corrected, row.z, row.z_hat, row.q_raw,
                row.q_corrected, row.q_raw_roll, row.q_corrected_roll);
  return std::string(buf);
}

Pipeline::Pipeline(PipelineConfig config, std::uint64_t seed, std::size_t rolling_window)
    : cfg_(std::move(config)),
      encoder_(cfg_.encoder_prior_weight),
      roll_raw_(rolling_window),
      roll_corrected_(rolling_window) {
  if (cfg_.strategy == CorrectionStrategy::Model) {
    if (cfg_.learner.is_null()) {
      throw ConfigError("pipeline \"" + cfg_.name + "\": model strategy needs a learner");
    }
    learner_ = make_regressor(cfg_.learner, substream_seed(seed, "learner:" + cfg_.name));
    const std::string type = learner_->type();
    use_one_hot_ = type == "linear" || type == "fm";
    if (cfg_.batch && type != "batch_linear") {
      throw ConfigError("pipeline \"" + cfg_.name + "\": batch pipelines use batch_linear");
    }
    if (!cfg_.batch && type == "batch_linear") {
      throw ConfigError("pipeline \"" + cfg_.name + "\": batch_linear requires \"batch\": true");
    }
  } else if (cfg_.batch) {
    throw ConfigError("pipeline \"" + cfg_.name + "\": only model pipelines can be batch");
  }
}

FeatureVector Pipeline::featurize(const PlanRecord& record, const EncodingKeySet& keys) {
  FeatureVector x = general_to_features(extract_general(record));
  for (const auto& [name, value] : encoder_.encode_aggregated(keys)) x[name] = value;
  if (use_one_hot_) {
    for (const auto& [name, value] : one_hot(keys, vocab_)) x[name] = value;
  }
  return x;
}

StreamRow Pipeline::step(const PlanRecord& record, std::int64_t step_index, int bucket) {
  // (1) featurize with the current encoders
  const EncodingKeySet keys = extract_keys(record);
  const FeatureVector x = featurize(record, keys);

  // (2) predict
  std::optional<Real> z_hat;
  if (cfg_.strategy == CorrectionStrategy::Model) {
    z_hat = learner_->predict(x);
    if (auto var = learner_->predictive_variance(x)) {
      ++variance_samples_;
      mean_predictive_variance_ += (*var - mean_predictive_variance_) /
                                   static_cast<Real>(variance_samples_);
    }
  }

  // (3) corrected estimate and both q-errors
  const Real corrected =
      correct(record, cfg_.strategy, global_, per_join_, z_hat, cfg_.clamp);
  StreamRow row;
  row.step = step_index;
  row.bucket = bucket;
  row.y = record.actual_cardinality;
  row.y_hat_raw = record.estimated_cardinality;
  row.y_hat_corrected = corrected;
  row.z = target_of(record).z;
  // For factor strategies the z_hat column records the applied log-factor.
  row.z_hat = z_hat ? *z_hat
                    : std::log(std::max(corrected, 1.0) /
                               std::max(record.estimated_cardinality, 1.0));
  row.q_raw = q_error(static_cast<Real>(record.actual_cardinality), record.estimated_cardinality);
  row.q_corrected = q_error(static_cast<Real>(record.actual_cardinality), corrected);

  // (4) updates; ground truth never feeds back into this step's prediction
  if (!frozen_) {
    global_.update(record);
    per_join_.update(record);
    encoder_.update(keys, row.z);
    if (learner_) learner_->learn(x, row.z);
  }

  roll_raw_.push(row.q_raw);
  roll_corrected_.push(row.q_corrected);
  row.q_raw_roll = roll_raw_.mean();
  row.q_corrected_roll = roll_corrected_.mean();
  q_raw_all_.push_back(row.q_raw);
  q_corrected_all_.push_back(row.q_corrected);
  return row;
}

void Pipeline::warm_observe(const PlanRecord& record) {
  if (!cfg_.batch) {
    throw ConfigError("pipeline \"" + cfg_.name + "\": warm-up applies to batch pipelines");
  }
  const EncodingKeySet keys = extract_keys(record);
  const FeatureVector x = featurize(record, keys);
  const Real z = target_of(record).z;
  warmup_samples_.emplace_back(x, z);
  global_.update(record);
  per_join_.update(record);
  encoder_.update(keys, z);
}

void Pipeline::finish_warmup() {
  auto* batch = dynamic_cast<BatchLinearRegressor*>(learner_.get());
  if (batch == nullptr) {
    throw ConfigError("pipeline \"" + cfg_.name + "\": not a batch pipeline");
  }
  batch->fit(warmup_samples_);
  warmup_samples_.clear();
  warmup_samples_.shrink_to_fit();
  frozen_ = true;
}

json Pipeline::diagnostics() const {
  json out = {{"skipped", skipped_},
              {"ignored_features", learner_ ? learner_->ignored_feature_count() : 0},
              {"vocabulary_size", vocab_.size()},
              {"encoder_updates", encoder_.total_updates()}};
  if (variance_samples_ > 0) out["mean_predictive_variance"] = mean_predictive_variance_;
  if (const auto* bayes = dynamic_cast<const BayesianLinearRegressor*>(learner_.get())) {
    out["resymmetrizations"] = bayes->resymmetrize_count();
  }
  return out;
}

json Pipeline::save_state() const {
  json warm = json::array();
  for (const auto& [x, z] : warmup_samples_) warm.push_back({{"x", x}, {"z", z}});
  return {{"name", cfg_.name},
          {"strategy", strategy_name(cfg_.strategy)},
          {"frozen", frozen_},
          {"encoder", encoder_.save_state()},
          {"vocab", vocab_.save_state()},
          {"global", global_.save_state()},
          {"per_join", per_join_.save_state()},
          {"learner", learner_ ? learner_->save_state() : json()},
          {"roll_raw", roll_raw_.save_state()},
          {"roll_corrected", roll_corrected_.save_state()},
          {"warmup_samples", warm},
          {"skipped", skipped_},
          {"variance_samples", variance_samples_},
          {"mean_predictive_variance", mean_predictive_variance_},
          {"q_raw_all", q_raw_all_},
          {"q_corrected_all", q_corrected_all_}};
}

void Pipeline::load_state(const json& state) {
  if (state.at("name").get<std::string>() != cfg_.name) {
    throw ConfigError("pipeline state: name mismatch");
  }
  frozen_ = state.at("frozen").get<bool>();
  encoder_ = TargetEncoder::from_state(state.at("encoder"));
  vocab_ = DynamicVocabulary::from_state(state.at("vocab"));
  global_ = GlobalFactor::from_state(state.at("global"));
  per_join_ = SegmentedFactors::from_state(state.at("per_join"));
  if (learner_) learner_->load_state(state.at("learner"));
  roll_raw_ = RollingMean::from_state(state.at("roll_raw"));
  roll_corrected_ = RollingMean::from_state(state.at("roll_corrected"));
  warmup_samples_.clear();
  for (const auto& item : state.at("warmup_samples")) {
    warmup_samples_.emplace_back(item.at("x").get<FeatureVector>(), item.at("z").get<Real>());
  }
  skipped_ = state.at("skipped").get<std::int64_t>();
  variance_samples_ = state.at("variance_samples").get<std::int64_t>();
  mean_predictive_variance_ = state.at("mean_predictive_variance").get<Real>();
  q_raw_all_ = state.at("q_raw_all").get<std::vector<Real>>();
  q_corrected_all_ = state.at("q_corrected_all").get<std::vector<Real>>();
}

}  // namespace driftsel
