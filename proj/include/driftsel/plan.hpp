#pragma once

#include "driftsel/types.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace driftsel {

enum class CmpOp { Eq, Lt, Le, Gt, Ge };

const char* cmp_op_symbol(CmpOp op);
std::optional<CmpOp> cmp_op_from_symbol(std::string_view symbol);

/// Predicate literals are JSON scalars: a number or a string.
using Literal = std::variant<Real, std::string>;

std::string literal_to_string(const Literal& lit);

struct Predicate {
  std::string relation;
  std::string attribute;
  CmpOp op = CmpOp::Eq;
  Literal literal;

  bool operator==(const Predicate&) const = default;
};

struct AttrRef {
  std::string relation;
  std::string attribute;

  auto operator<=>(const AttrRef&) const = default;
};

/// Equi-join between two attributes. Construction canonicalises the pair so
/// that the lexicographically smaller side is stored on the left; a join has
/// exactly one representation.
struct Join {
  AttrRef left;
  AttrRef right;

  Join() = default;
  Join(AttrRef a, AttrRef b);

  auto operator<=>(const Join&) const = default;
};

/// One (sub-)plan observation: what the plan touches, the cost model's
/// estimate y_hat, and the observed cardinality y.
struct PlanRecord {
  std::string plan_id;
  std::set<std::string> relations;
  std::set<Join> joins;
  std::vector<Predicate> predicates;
  // Predicate expressions that could not be parsed into a typed Predicate.
  // They still work as target-encoding keys and count toward n_predicates.
  std::vector<std::string> opaque_predicates;
  Real estimated_cardinality = 0.0;
  std::int64_t actual_cardinality = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

enum class NodeKind { Scan, Filter, Join };

struct PlanTree {
  NodeKind kind = NodeKind::Scan;
  Real est_rows = 0.0;
  std::int64_t act_rows = 0;
  std::string relation;  // scans only
  std::vector<Predicate> predicates;
  std::vector<std::string> opaque_predicates;
  std::vector<Join> joins;  // join nodes only
  std::vector<PlanTree> children;

  void validate() const;
  std::size_t node_count() const;
};

/// Parses one line of the plan-stream JSONL schema. Malformed syntax yields a
/// ParseError carrying the byte offset; invariant violations yield a
/// ValidationError naming the field.
PlanRecord parse_plan_jsonl(const std::string& line);

/// Inverse of parse_plan_jsonl; parse(serialize(r)) == r for valid records.
std::string serialize_plan_jsonl(const PlanRecord& record);

/// Imports a PostgreSQL EXPLAIN (ANALYZE, FORMAT JSON) document. Accepts the
/// array form [{"Plan": {...}}] as well as a bare {"Plan": {...}} object.
PlanTree import_postgres_explain(const std::string& document);

/// One PlanRecord per node of the tree, each flattening the subtree rooted at
/// that node, in pre-order. plan ids are "<base_id>#<preorder index>".
std::vector<PlanRecord> enumerate_subplans(const PlanTree& tree,
                                           const std::string& base_id = "p");

}  // namespace driftsel
