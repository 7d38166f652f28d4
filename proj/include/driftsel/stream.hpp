#pragma once

#include "driftsel/correction.hpp"
#include "driftsel/features.hpp"
#include "driftsel/learners.hpp"
#include "driftsel/plan.hpp"
#include "driftsel/types.hpp"

#include <nlohmann/json.hpp>

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace driftsel {

/// q = max(y'/y_hat', y_hat'/y') with both sides clamped to >= 1 row.
Real q_error(Real y, Real y_hat);

/// Arithmetic mean of the trailing min(t+1, w) values.
class RollingMean {
 public:
  explicit RollingMean(std::size_t window = 1);

  void push(Real v);
  Real mean() const;

  nlohmann::json save_state() const;
  static RollingMean from_state(const nlohmann::json& state);

 private:
  std::size_t window_;
  std::deque<Real> values_;
  Real sum_ = 0.0;
};

/// Trailing rolling means over a whole series (reporting helper).
std::vector<Real> rolling_mean(const std::vector<Real>& series, std::size_t window);

/// One prequential report row; written to the CSV in this column order.
struct StreamRow {
  std::int64_t step = 0;
  int bucket = 0;
  std::int64_t y = 0;
  Real y_hat_raw = 0.0;
  Real y_hat_corrected = 0.0;
  Real z = 0.0;
  Real z_hat = 0.0;
  Real q_raw = 0.0;
  Real q_corrected = 0.0;
  Real q_raw_roll = 0.0;
  Real q_corrected_roll = 0.0;
};

extern const char* kReportCsvHeader;
std::string format_csv_row(const StreamRow& row);

struct PipelineConfig {
  std::string name;
  CorrectionStrategy strategy = CorrectionStrategy::Model;
  nlohmann::json learner;  // null for pure factor strategies
  bool batch = false;      // warm-fit once, frozen afterwards
  Real encoder_prior_weight = 5.0;
  FactorClamp clamp;
};

/// One correction pipeline: its own encoders, vocabulary, factors, and
/// learner, driven prequentially. Single-writer by contract; the stream
/// loop owns all mutation.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::uint64_t seed, std::size_t rolling_window);

  const std::string& name() const { return cfg_.name; }
  const PipelineConfig& config() const { return cfg_; }
  bool is_batch() const { return cfg_.batch; }

  /// The prequential step. Order is normative: featurize with the current
  /// encoders, predict, score, then update factors, encoders, learner.
  StreamRow step(const PlanRecord& record, std::int64_t step_index, int bucket);

  /// Batch warm-up: featurize, stash the sample, update the encoder.
  void warm_observe(const PlanRecord& record);
  /// Fits the frozen comparator on the stashed warm-up samples.
  void finish_warmup();

  std::int64_t skipped() const { return skipped_; }
  void note_skipped() { ++skipped_; }
  const std::vector<Real>& q_raw_history() const { return q_raw_all_; }
  const std::vector<Real>& q_corrected_history() const { return q_corrected_all_; }
  const Regressor* learner() const { return learner_.get(); }

  nlohmann::json diagnostics() const;
  nlohmann::json save_state() const;
  void load_state(const nlohmann::json& state);

 private:
  FeatureVector featurize(const PlanRecord& record, const EncodingKeySet& keys);

  PipelineConfig cfg_;
  bool use_one_hot_ = false;
  bool frozen_ = false;
  TargetEncoder encoder_;
  DynamicVocabulary vocab_;
  GlobalFactor global_;
  SegmentedFactors per_join_;
  std::unique_ptr<Regressor> learner_;
  RollingMean roll_raw_;
  RollingMean roll_corrected_;
  std::vector<std::pair<FeatureVector, Real>> warmup_samples_;
  std::int64_t skipped_ = 0;
  std::int64_t variance_samples_ = 0;
  Real mean_predictive_variance_ = 0.0;
  std::vector<Real> q_raw_all_;
  std::vector<Real> q_corrected_all_;
};

}  // namespace driftsel
