#pragma once

#include "driftsel/plan.hpp"
#include "driftsel/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace driftsel {

/// General plan statistics (the features that work on never-seen plans).
struct GeneralFeatures {
  std::int64_t n_joins = 0;
  std::int64_t n_relations = 0;
  std::int64_t n_predicates = 0;
  std::int64_t max_predicates_one_relation = 0;
};

GeneralFeatures extract_general(const PlanRecord& record);

enum class KeyKind { Relation, Join, Attribute, AttributeValue, AttributePair, Expression };

const char* key_kind_name(KeyKind kind);

struct EncodingKey {
  KeyKind kind;
  std::string name;  // namespaced, e.g. "rel:t", "attrval:t.a=3"

  bool operator==(const EncodingKey&) const = default;
};

/// Deterministic, duplicate-free key set extracted from one record.
struct EncodingKeySet {
  std::vector<EncodingKey> keys;
};

EncodingKeySet extract_keys(const PlanRecord& record);

/// Streaming per-key (count, mean) statistics of the learning target with a
/// Bayesian-average prior. The prior mean is the global running mean of the
/// target and defaults to 0 before any update.
///
/// Single-writer: one stream loop owns all updates. The type is cheaply
/// copyable, and a copy is the snapshot to hand to concurrent read-only
/// scorers.
class TargetEncoder {
 public:
  explicit TargetEncoder(Real prior_weight = 5.0) : prior_weight_(prior_weight) {}

  /// Bayesian average (m*g + n_k*mean_k) / (m + n_k) for one key;
  /// unseen keys fall back to the global mean.
  Real encode_key(const std::string& key) const;

  /// One feature per key, named "te:<key>".
  FeatureVector encode(const EncodingKeySet& keys) const;

  /// One feature per key kind, named "te:<kind>": the mean of the per-key
  /// encodings of that kind, or the global mean when the record has no keys
  /// of the kind. This is the fixed-name form consumed by the
  /// fixed-dimension learners.
  FeatureVector encode_aggregated(const EncodingKeySet& keys) const;

  /// Streaming-mean update of every key and of the global statistics.
  void update(const EncodingKeySet& keys, Real target);

  std::int64_t total_updates() const { return total_; }
  Real global_mean() const { return global_mean_; }
  Real prior_weight() const { return prior_weight_; }
  std::int64_t key_count(const std::string& key) const;
  Real key_mean(const std::string& key) const;

  nlohmann::json save_state() const;
  static TargetEncoder from_state(const nlohmann::json& state);

 private:
  struct KeyStats {
    std::int64_t n = 0;
    Real mean = 0.0;
  };
  std::unordered_map<std::string, KeyStats> stats_;
  std::int64_t total_ = 0;
  Real global_mean_ = 0.0;
  Real prior_weight_ = 5.0;
};

/// Grows on the fly: every key ever seen gets a stable integer id.
class DynamicVocabulary {
 public:
  /// Returns the id, inserting the key if new.
  std::size_t id_of(const std::string& key);
  bool contains(const std::string& key) const { return ids_.count(key) > 0; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  nlohmann::json save_state() const;
  static DynamicVocabulary from_state(const nlohmann::json& state);

 private:
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> names_;
};

/// Sparse binary indicators, one per key, named "oh:<key>". Unseen keys are
/// added to the vocabulary.
FeatureVector one_hot(const EncodingKeySet& keys, DynamicVocabulary& vocab);

/// Feature names for GeneralFeatures, values as-is.
FeatureVector general_to_features(const GeneralFeatures& g);

/// The fixed feature schema used by learners that need a frozen input
/// dimension: the four general features plus one aggregate per key kind.
const std::vector<std::string>& fixed_feature_schema();

/// Frozen feature-name -> index map. Projection ignores unknown names and
/// counts them in a diagnostics counter.
class FeatureIndexMap {
 public:
  FeatureIndexMap() = default;
  explicit FeatureIndexMap(std::vector<std::string> names);

  std::size_t dimension() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  Vector project(const FeatureVector& x) const;
  std::int64_t ignored_count() const { return ignored_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  mutable std::int64_t ignored_ = 0;
};

/// Welford running standardizer over a fixed dimension.
class RunningScaler {
 public:
  RunningScaler() = default;
  explicit RunningScaler(std::size_t dim) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

  void update(const Vector& v);
  Vector transform(const Vector& v) const;
  std::int64_t count() const { return n_; }

  nlohmann::json save_state() const;
  static RunningScaler from_state(const nlohmann::json& state);

 private:
  std::int64_t n_ = 0;
  Vector mean_;
  Vector m2_;
};

}  // namespace driftsel
