#pragma once

#include "driftsel/drift.hpp"
#include "driftsel/plan.hpp"
#include "driftsel/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace driftsel {

enum class AttrDistribution { Uniform, Zipf };

struct AttributeSpec {
  std::string name;
  std::int64_t domain = 2;  // values live in [0, domain)
  AttrDistribution distribution = AttrDistribution::Uniform;
  Real zipf_s = 1.0;
};

enum class CorrelationMode { Independent, Equal, NoisyCopy };

struct CorrelationSpec {
  std::string relation;
  std::string attr_a;
  std::string attr_b;
  CorrelationMode mode = CorrelationMode::Independent;
  Real copy_probability = 1.0;  // noisy-copy only
};

struct RelationSpec {
  std::string name;
  std::int64_t row_count = 1;
  std::vector<AttributeSpec> attributes;
};

struct SynthSchema {
  std::vector<RelationSpec> relations;
  std::vector<CorrelationSpec> correlations;
  std::vector<Join> join_keys;  // declared joinable attribute pairs
  std::uint64_t seed = 0;

  void validate() const;
  static SynthSchema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Column-major integer tables plus per-attribute value-frequency histograms
/// and a value -> row-ids index used by the brute-force oracle.
class SynthDatabase {
 public:
  struct Column {
    std::int64_t domain = 0;
    std::vector<std::int64_t> values;
    std::vector<std::int64_t> histogram;               // counts per value
    std::vector<std::vector<std::int32_t>> row_index;  // rows per value
    std::int64_t distinct = 0;

    void finalize(std::int64_t domain_size);
  };

  struct Relation {
    std::string name;
    std::int64_t row_count = 0;
    std::map<std::string, Column> columns;
  };

  const Relation& relation(const std::string& name) const;
  const Column& column(const std::string& relation, const std::string& attribute) const;
  bool has_relation(const std::string& name) const { return relations_.count(name) > 0; }
  const std::map<std::string, Relation>& relations() const { return relations_; }

  std::map<std::string, Relation>& mutable_relations() { return relations_; }

 private:
  std::map<std::string, Relation> relations_;
};

/// Deterministic generation: per-column RNG substreams derived from the
/// schema seed, so the result is independent of generation order.
SynthDatabase generate_database(const SynthSchema& schema);

/// Cost-model style estimate under attribute value independence and join
/// uniformity; floored at eps so downstream ratios stay finite.
Real avi_estimate(const PlanRecord& record, const SynthDatabase& db, Real eps = 1e-9);

/// Exact count of the conjunctive query by backtracking join evaluation.
/// The brute-force oracle behind every derived expectation downstream.
std::int64_t true_cardinality(const PlanRecord& record, const SynthDatabase& db,
                              Real safety_bound = 1e8);

/// One workload step: the instantiated record plus its provenance.
struct WorkloadItem {
  PlanRecord record;
  int bucket = 0;
  std::size_t template_index = 0;
};

/// Instantiates n records. At step t the bucket comes from the schedule,
/// the template uniformly from that bucket, and predicate literals uniformly
/// from the attribute domains. Placeholder literals are strings starting
/// with '$'; identical placeholder names within one template share a draw.
/// Each record carries y_hat = avi_estimate and y = true_cardinality.
std::vector<WorkloadItem> generate_workload(const SynthDatabase& db,
                                            const std::vector<PlanRecord>& templates,
                                            const BucketAssignment& assignment,
                                            const DriftSchedule& schedule, std::int64_t n,
                                            std::uint64_t seed);

/// Binary snapshot: version byte, then per relation/column little-endian
/// arrays. Documented in the README.
void save_database(const SynthDatabase& db, const std::string& path);
SynthDatabase load_database(const std::string& path);

}  // namespace driftsel
