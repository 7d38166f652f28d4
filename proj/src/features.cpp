#include "driftsel/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <map>
#include <set>

namespace driftsel {

using nlohmann::json;

GeneralFeatures extract_general(const PlanRecord& record) {
  GeneralFeatures g;
  g.n_joins = static_cast<std::int64_t>(record.joins.size());
  g.n_relations = static_cast<std::int64_t>(record.relations.size());
  g.n_predicates = static_cast<std::int64_t>(record.predicates.size() +
                                             record.opaque_predicates.size());
  std::map<std::string, std::int64_t> per_relation;
  for (const Predicate& p : record.predicates) ++per_relation[p.relation];
  for (const auto& [rel, n] : per_relation) {
    g.max_predicates_one_relation = std::max(g.max_predicates_one_relation, n);
  }
  return g;
}

const char* key_kind_name(KeyKind kind) {
  switch (kind) {
    case KeyKind::Relation: return "rel";
    case KeyKind::Join: return "join";
    case KeyKind::Attribute: return "attr";
    case KeyKind::AttributeValue: return "attrval";
    case KeyKind::AttributePair: return "attrpair";
    case KeyKind::Expression: return "expr";
  }
  return "?";
}

EncodingKeySet extract_keys(const PlanRecord& record) {
  EncodingKeySet out;
  for (const auto& rel : record.relations) {
    out.keys.push_back({KeyKind::Relation, "rel:" + rel});
  }
  for (const Join& j : record.joins) {
    out.keys.push_back({KeyKind::Join, "join:" + j.left.relation + "." + j.left.attribute +
                                           "=" + j.right.relation + "." + j.right.attribute});
  }
  std::set<std::string> attrs;
  std::set<std::string> attrvals;
  for (const Predicate& p : record.predicates) {
    attrs.insert(p.relation + "." + p.attribute);
    attrvals.insert(p.relation + "." + p.attribute + cmp_op_symbol(p.op) +
                    literal_to_string(p.literal));
  }
  for (const auto& a : attrs) out.keys.push_back({KeyKind::Attribute, "attr:" + a});
  for (const auto& av : attrvals) out.keys.push_back({KeyKind::AttributeValue, "attrval:" + av});
  for (auto i = attrs.begin(); i != attrs.end(); ++i) {
    for (auto j = std::next(i); j != attrs.end(); ++j) {
      out.keys.push_back({KeyKind::AttributePair, "attrpair:" + *i + "|" + *j});
    }
  }
  std::set<std::string> exprs(record.opaque_predicates.begin(), record.opaque_predicates.end());
  for (const auto& e : exprs) out.keys.push_back({KeyKind::Expression, "expr:" + e});
  return out;
}

Real TargetEncoder::encode_key(const std::string& key) const {
  auto it = stats_.find(key);
  if (it == stats_.end() || it->second.n == 0) return global_mean_;
  const Real n = static_cast<Real>(it->second.n);
  return (prior_weight_ * global_mean_ + n * it->second.mean) / (prior_weight_ + n);
}

FeatureVector TargetEncoder::encode(const EncodingKeySet& keys) const {
  FeatureVector out;
  for (const EncodingKey& k : keys.keys) {
    out["te:" + k.name] = encode_key(k.name);
  }
  return out;
}

FeatureVector TargetEncoder::encode_aggregated(const EncodingKeySet& keys) const {
  std::map<KeyKind, std::pair<Real, std::int64_t>> sums;
  for (const EncodingKey& k : keys.keys) {
    auto& [sum, n] = sums[k.kind];
    sum += encode_key(k.name);
    ++n;
  }
  FeatureVector out;
  for (KeyKind kind : {KeyKind::Relation, KeyKind::Join, KeyKind::Attribute,
                       KeyKind::AttributeValue, KeyKind::AttributePair, KeyKind::Expression}) {
    auto it = sums.find(kind);
    // Kinds with no keys fall back to the global mean so every feature in
    // the fixed schema stays populated on every record.
    out[std::string("te:") + key_kind_name(kind)] =
        it == sums.end() ? global_mean_
                         : it->second.first / static_cast<Real>(it->second.second);
  }
  return out;
}

void TargetEncoder::update(const EncodingKeySet& keys, Real target) {
  if (!std::isfinite(target)) {
    throw NumericError("target encoder update: non-finite target");
  }
  for (const EncodingKey& k : keys.keys) {
    KeyStats& s = stats_[k.name];
    ++s.n;
    s.mean += (target - s.mean) / static_cast<Real>(s.n);
  }
  ++total_;
  global_mean_ += (target - global_mean_) / static_cast<Real>(total_);
}

std::int64_t TargetEncoder::key_count(const std::string& key) const {
  auto it = stats_.find(key);
  return it == stats_.end() ? 0 : it->second.n;
}

Real TargetEncoder::key_mean(const std::string& key) const {
  auto it = stats_.find(key);
  return it == stats_.end() ? 0.0 : it->second.mean;
}

json TargetEncoder::save_state() const {
  json keys = json::object();
  std::vector<std::string> names;
  names.reserve(stats_.size());
  for (const auto& [name, s] : stats_) names.push_back(name);
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const KeyStats& s = stats_.at(name);
    keys[name] = {{"n", s.n}, {"mean", s.mean}};
  }
  return {{"prior_weight", prior_weight_},
          {"total", total_},
          {"global_mean", global_mean_},
          {"keys", keys}};
}

TargetEncoder TargetEncoder::from_state(const json& state) {
  TargetEncoder enc(state.at("prior_weight").get<Real>());
  enc.total_ = state.at("total").get<std::int64_t>();
  enc.global_mean_ = state.at("global_mean").get<Real>();
  for (const auto& [name, s] : state.at("keys").items()) {
    enc.stats_[name] = KeyStats{s.at("n").get<std::int64_t>(), s.at("mean").get<Real>()};
  }
  return enc;
}

std::size_t DynamicVocabulary::id_of(const std::string& key) {
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  std::size_t id = names_.size();
  ids_.emplace(key, id);
  names_.push_back(key);
  return id;
}

json DynamicVocabulary::save_state() const { return json(names_); }

DynamicVocabulary DynamicVocabulary::from_state(const json& state) {
  DynamicVocabulary v;
  for (const auto& name : state) v.id_of(name.get<std::string>());
  return v;
}

FeatureVector one_hot(const EncodingKeySet& keys, DynamicVocabulary& vocab) {
  FeatureVector out;
  for (const EncodingKey& k : keys.keys) {
    vocab.id_of(k.name);
    out["oh:" + k.name] = 1.0;
  }
  return out;
}

FeatureVector general_to_features(const GeneralFeatures& g) {
  return FeatureVector{{"gen:n_joins", static_cast<Real>(g.n_joins)},
                       {"gen:n_relations", static_cast<Real>(g.n_relations)},
                       {"gen:n_predicates", static_cast<Real>(g.n_predicates)},
                       {"gen:max_preds_one_rel", static_cast<Real>(g.max_predicates_one_relation)}};
}

const std::vector<std::string>& fixed_feature_schema() {
  static const std::vector<std::string> schema = {
      "gen:n_joins",  "gen:n_relations", "gen:n_predicates", "gen:max_preds_one_rel",
      "te:rel",       "te:join",         "te:attr",          "te:attrval",
      "te:attrpair",  "te:expr",
  };
  return schema;
}

FeatureIndexMap::FeatureIndexMap(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
}

Vector FeatureIndexMap::project(const FeatureVector& x) const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(names_.size()));
  for (const auto& [name, value] : x) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      ++ignored_;
      continue;
    }
    v[static_cast<Eigen::Index>(it->second)] = value;
  }
  return v;
}

void RunningScaler::update(const Vector& v) {
  ++n_;
  Vector delta = v - mean_;
  mean_ += delta / static_cast<Real>(n_);
  m2_ += delta.cwiseProduct(v - mean_);
}

Vector RunningScaler::transform(const Vector& v) const {
  if (n_ < 2) return v - (n_ >= 1 ? mean_ : Vector::Zero(v.size()));
  Vector var = m2_ / static_cast<Real>(n_ - 1);
  Vector sd = var.cwiseMax(1e-12).cwiseSqrt();
  return (v - mean_).cwiseQuotient(sd);
}

json RunningScaler::save_state() const {
  return {{"n", n_},
          {"mean", std::vector<Real>(mean_.data(), mean_.data() + mean_.size())},
          {"m2", std::vector<Real>(m2_.data(), m2_.data() + m2_.size())}};
}

RunningScaler RunningScaler::from_state(const json& state) {
  RunningScaler s;
  s.n_ = state.at("n").get<std::int64_t>();
  auto mean = state.at("mean").get<std::vector<Real>>();
  auto m2 = state.at("m2").get<std::vector<Real>>();
  s.mean_ = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.m2_ = Eigen::Map<const Vector>(m2.data(), static_cast<Eigen::Index>(m2.size()));
  return s;
}

}  // namespace driftsel
