#include "driftsel/plan.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <sstream>

namespace driftsel {

using nlohmann::json;

const char* cmp_op_symbol(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "=";
}

std::optional<CmpOp> cmp_op_from_symbol(std::string_view symbol) {
  if (symbol == "=") return CmpOp::Eq;
  if (symbol == "<") return CmpOp::Lt;
  if (symbol == "<=") return CmpOp::Le;
  if (symbol == ">") return CmpOp::Gt;
  if (symbol == ">=") return CmpOp::Ge;
  return std::nullopt;
}

std::string literal_to_string(const Literal& lit) {
  if (std::holds_alternative<std::string>(lit)) return std::get<std::string>(lit);
  const Real v = std::get<Real>(lit);
  if (v == static_cast<Real>(static_cast<std::int64_t>(v)) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<std::int64_t>(v));
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Join::Join(AttrRef a, AttrRef b) {
  if (a == b) {
    throw ValidationError("joins: left and right sides must differ (" +
                          a.relation + "." + a.attribute + ")");
  }
  if (b < a) std::swap(a, b);
  left = std::move(a);
  right = std::move(b);
}

void PlanRecord::validate() const {
  if (relations.empty()) {
    throw ValidationError("relations: must be non-empty");
  }
  if (!(estimated_cardinality > 0.0) || !std::isfinite(estimated_cardinality)) {
    throw ValidationError("estimated_cardinality: must be finite and > 0");
  }
  if (actual_cardinality < 0) {
    throw ValidationError("actual_cardinality: must be >= 0");
  }
  for (const Join& j : joins) {
    if (j.left == j.right) {
      throw ValidationError("joins: degenerate join");
    }
    if (!relations.count(j.left.relation) || !relations.count(j.right.relation)) {
      throw ValidationError("joins: join references relation not in relations");
    }
  }
  for (const Predicate& p : predicates) {
    if (p.relation.empty() || p.attribute.empty()) {
      throw ValidationError("predicates: relation and attribute must be non-empty");
    }
    if (!relations.count(p.relation)) {
      throw ValidationError("predicates: predicate references relation not in relations");
    }
  }
}

void PlanTree::validate() const {
  if (kind == NodeKind::Join) {
    if (children.size() != 2) {
      throw ValidationError("plan tree: join node must have exactly 2 children");
    }
  } else if (children.size() > 1) {
    throw ValidationError("plan tree: scan/filter node must have <= 1 child");
  }
  if (act_rows < 0) {
    throw ValidationError("plan tree: actual rows must be >= 0");
  }
  for (const PlanTree& c : children) c.validate();
}

std::size_t PlanTree::node_count() const {
  std::size_t n = 1;
  for (const PlanTree& c : children) n += c.node_count();
  return n;
}

namespace {

Literal literal_from_json(const json& j, const char* field) {
  if (j.is_number()) return Literal(j.get<Real>());
  if (j.is_string()) return Literal(j.get<std::string>());
  throw ValidationError(std::string(field) + ": literal must be a number or a string");
}

json literal_to_json(const Literal& lit) {
  if (std::holds_alternative<Real>(lit)) {
    const Real v = std::get<Real>(lit);
    if (v == static_cast<Real>(static_cast<std::int64_t>(v)) && std::abs(v) < 1e15) {
      return json(static_cast<std::int64_t>(v));
    }
    return json(v);
  }
  return json(std::get<std::string>(lit));
}

const json& require_key(const json& j, const char* key, const char* field) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError(std::string(field) + ": missing key \"" + key + "\"");
  }
  return *it;
}

}  // namespace

PlanRecord parse_plan_jsonl(const std::string& line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed plan record at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
  if (!doc.is_object()) {
    throw ValidationError("record: expected a JSON object");
  }

  PlanRecord rec;
  rec.plan_id = require_key(doc, "plan_id", "plan_id").get<std::string>();
  for (const auto& r : require_key(doc, "relations", "relations")) {
    rec.relations.insert(r.get<std::string>());
  }
  for (const auto& jj : require_key(doc, "joins", "joins")) {
    AttrRef left{require_key(require_key(jj, "left", "joins"), "relation", "joins").get<std::string>(),
                 require_key(jj.at("left"), "attribute", "joins").get<std::string>()};
    AttrRef right{require_key(require_key(jj, "right", "joins"), "relation", "joins").get<std::string>(),
                  require_key(jj.at("right"), "attribute", "joins").get<std::string>()};
    rec.joins.insert(Join(std::move(left), std::move(right)));
  }
  for (const auto& pj : require_key(doc, "predicates", "predicates")) {
    Predicate p;
    p.relation = require_key(pj, "relation", "predicates").get<std::string>();
    p.attribute = require_key(pj, "attribute", "predicates").get<std::string>();
    const auto sym = require_key(pj, "operator", "predicates").get<std::string>();
    auto op = cmp_op_from_symbol(sym);
    if (!op) {
      throw ValidationError("predicates: unknown operator \"" + sym + "\"");
    }
    p.op = *op;
    p.literal = literal_from_json(require_key(pj, "literal", "predicates"), "predicates");
    rec.predicates.push_back(std::move(p));
  }
  if (auto it = doc.find("opaque_predicates"); it != doc.end()) {
    for (const auto& s : *it) rec.opaque_predicates.push_back(s.get<std::string>());
  }
  rec.estimated_cardinality =
      require_key(doc, "estimated_cardinality", "estimated_cardinality").get<Real>();
  rec.actual_cardinality =
      require_key(doc, "actual_cardinality", "actual_cardinality").get<std::int64_t>();

  rec.validate();
  return rec;
}

std::string serialize_plan_jsonl(const PlanRecord& record) {
  json doc = json::object();
  doc["plan_id"] = record.plan_id;
  doc["relations"] = json::array();
  for (const auto& r : record.relations) doc["relations"].push_back(r);
  doc["joins"] = json::array();
  for (const Join& j : record.joins) {
    doc["joins"].push_back({{"left", {{"relation", j.left.relation}, {"attribute", j.left.attribute}}},
                            {"right", {{"relation", j.right.relation}, {"attribute", j.right.attribute}}}});
  }
  doc["predicates"] = json::array();
  for (const Predicate& p : record.predicates) {
    doc["predicates"].push_back({{"relation", p.relation},
                                 {"attribute", p.attribute},
                                 {"operator", cmp_op_symbol(p.op)},
                                 {"literal", literal_to_json(p.literal)}});
  }
  if (!record.opaque_predicates.empty()) {
    doc["opaque_predicates"] = record.opaque_predicates;
  }
  doc["estimated_cardinality"] = record.estimated_cardinality;
  doc["actual_cardinality"] = record.actual_cardinality;
  return doc.dump();
}

namespace {

// --- EXPLAIN expression parsing -------------------------------------------
//
// PostgreSQL prints filter and join conditions as text, e.g.
//   "(a = 3)"  "((a = 3) AND (b < 5))"  "(t.x = u.y)"  "(c = 'FR'::bpchar)"
// We parse conjunctions of simple comparisons; anything else is retained as
// an opaque key.

std::string strip(std::string s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

// Removes one layer of balanced outer parentheses, repeatedly.
std::string strip_parens(std::string s) {
  s = strip(std::move(s));
  while (s.size() >= 2 && s.front() == '(' && s.back() == ')') {
    int depth = 0;
    bool wraps = true;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s[i] == '(') ++depth;
      if (s[i] == ')') --depth;
      if (depth == 0) {
        wraps = false;
        break;
      }
    }
    if (!wraps) break;
    s = strip(s.substr(1, s.size() - 2));
  }
  return s;
}

// Splits on top-level " AND " only.
std::vector<std::string> split_conjuncts(const std::string& expr) {
  std::vector<std::string> out;
  int depth = 0;
  bool in_quote = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < expr.size(); ++i) {
    char c = expr[i];
    if (c == '\'') in_quote = !in_quote;
    if (in_quote) continue;
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (depth == 0 && expr.compare(i, 5, " AND ") == 0) {
      out.push_back(expr.substr(start, i - start));
      i += 4;
      start = i + 1;
    }
  }
  out.push_back(expr.substr(start));
  return out;
}

bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.';
  });
}

struct ParsedSide {
  bool is_column = false;
  std::string relation;  // empty when unqualified
  std::string attribute;
  bool is_literal = false;
  Literal literal;
};

std::optional<ParsedSide> parse_side(std::string tok) {
  tok = strip(std::move(tok));
  if (tok.empty()) return std::nullopt;
  ParsedSide side;
  if (tok.front() == '\'') {
    // 'text'::cast: take the quoted part.
    std::size_t close = tok.find('\'', 1);
    if (close == std::string::npos) return std::nullopt;
    std::string rest = strip(tok.substr(close + 1));
    if (!rest.empty() && rest.rfind("::", 0) != 0) return std::nullopt;
    side.is_literal = true;
    side.literal = Literal(tok.substr(1, close - 1));
    return side;
  }
  // numeric literal (possibly with ::cast suffix)
  {
    std::string num = tok;
    if (auto cast = num.find("::"); cast != std::string::npos) num = strip(num.substr(0, cast));
    Real value = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
    if (ec == std::errc() && ptr == num.data() + num.size()) {
      side.is_literal = true;
      side.literal = Literal(value);
      return side;
    }
  }
  if (is_identifier(tok)) {
    side.is_column = true;
    std::size_t dot = tok.find('.');
    if (dot != std::string::npos) {
      side.relation = tok.substr(0, dot);
      side.attribute = tok.substr(dot + 1);
      if (side.attribute.find('.') != std::string::npos) return std::nullopt;
    } else {
      side.attribute = tok;
    }
    return side;
  }
  return std::nullopt;
}

struct ParsedConditions {
  std::vector<Predicate> predicates;
  std::vector<Join> joins;
  std::vector<std::string> opaque;
};

// default_relation qualifies unqualified columns on scan nodes.
void parse_condition_text(const std::string& text, const std::string& default_relation,
                          bool allow_joins, ParsedConditions& out) {
  for (const std::string& raw : split_conjuncts(strip_parens(text))) {
    const std::string conjunct = strip_parens(raw);
    // find a comparison operator at top level, longest match first
    static const char* kOps[] = {"<=", ">=", "=", "<", ">"};
    std::size_t op_pos = std::string::npos;
    std::string op_sym;
    bool in_quote = false;
    int depth = 0;
    for (std::size_t i = 0; i < conjunct.size() && op_pos == std::string::npos; ++i) {
      char c = conjunct[i];
      if (c == '\'') in_quote = !in_quote;
      if (in_quote) continue;
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (depth != 0) continue;
      for (const char* cand : kOps) {
        std::size_t len = std::strlen(cand);
        if (conjunct.compare(i, len, cand) == 0) {
          // reject <> and != style operators
          if (cand[0] == '<' && len == 1 && i + 1 < conjunct.size() && conjunct[i + 1] == '>') break;
          op_pos = i;
          op_sym = cand;
          break;
        }
      }
    }
    if (op_pos == std::string::npos) {
      out.opaque.push_back(conjunct);
      continue;
    }
    auto lhs = parse_side(conjunct.substr(0, op_pos));
    auto rhs = parse_side(conjunct.substr(op_pos + op_sym.size()));
    auto op = cmp_op_from_symbol(op_sym);
    if (!lhs || !rhs || !op) {
      out.opaque.push_back(conjunct);
      continue;
    }
    if (lhs->is_column && rhs->is_literal) {
      std::string rel = lhs->relation.empty() ? default_relation : lhs->relation;
      if (rel.empty()) {
        out.opaque.push_back(conjunct);
        continue;
      }
      out.predicates.push_back(Predicate{rel, lhs->attribute, *op, rhs->literal});
    } else if (allow_joins && lhs->is_column && rhs->is_column && *op == CmpOp::Eq &&
               !lhs->relation.empty() && !rhs->relation.empty()) {
      try {
        out.joins.emplace_back(AttrRef{lhs->relation, lhs->attribute},
                               AttrRef{rhs->relation, rhs->attribute});
      } catch (const ValidationError&) {
        out.opaque.push_back(conjunct);
      }
    } else {
      out.opaque.push_back(conjunct);
    }
  }
}

bool node_is_join(const std::string& node_type) {
  return node_type == "Nested Loop" || node_type.find("Join") != std::string::npos;
}

PlanTree import_node(const json& node, const std::string& path) {
  if (!node.is_object()) {
    throw ImportError(path + ": plan node must be an object");
  }
  auto rows_it = node.find("Plan Rows");
  if (rows_it == node.end()) {
    throw ImportError(path + ": missing \"Plan Rows\"");
  }
  auto actual_it = node.find("Actual Rows");
  if (actual_it == node.end()) {
    throw ImportError(path + ": missing \"Actual Rows\" (EXPLAIN must use ANALYZE)");
  }

  PlanTree tree;
  tree.est_rows = std::max(rows_it->get<Real>(), 1e-9);
  tree.act_rows = actual_it->get<std::int64_t>();

  const std::string node_type = node.value("Node Type", "");
  if (auto plans = node.find("Plans"); plans != node.end()) {
    std::size_t i = 0;
    for (const auto& child : *plans) {
      tree.children.push_back(import_node(child, path + ".Plans[" + std::to_string(i) + "]"));
      ++i;
    }
  }

  if (tree.children.empty()) {
    // Leaves are row sources; treat them as scans even for exotic node types.
    tree.kind = NodeKind::Scan;
    tree.relation = node.value("Alias", node.value("Relation Name", node_type));
    if (tree.relation.empty()) tree.relation = "<leaf>";
  } else if (node_is_join(node_type) && tree.children.size() == 2) {
    tree.kind = NodeKind::Join;
  } else {
    tree.kind = NodeKind::Filter;
  }

  ParsedConditions conds;
  const std::string default_rel = tree.kind == NodeKind::Scan ? tree.relation : "";
  const bool allow_joins = tree.kind == NodeKind::Join;
  for (const char* key : {"Filter", "Index Cond", "Hash Cond", "Merge Cond", "Join Filter", "Recheck Cond"}) {
    if (auto it = node.find(key); it != node.end() && it->is_string()) {
      parse_condition_text(it->get<std::string>(), default_rel, allow_joins, conds);
    }
  }
  tree.predicates = std::move(conds.predicates);
  tree.joins = std::move(conds.joins);
  tree.opaque_predicates = std::move(conds.opaque);

  tree.validate();
  return tree;
}

}  // namespace

PlanTree import_postgres_explain(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ImportError("malformed EXPLAIN document at byte " + std::to_string(e.byte) +
                      ": " + e.what());
  }
  const json* root = &doc;
  if (doc.is_array()) {
    if (doc.empty()) throw ImportError("EXPLAIN document: empty array");
    root = &doc[0];
  }
  if (!root->is_object() || !root->contains("Plan")) {
    throw ImportError("EXPLAIN document: missing \"Plan\"");
  }
  return import_node((*root)["Plan"], "Plan");
}

namespace {

void flatten_into(const PlanTree& node, PlanRecord& rec) {
  if (node.kind == NodeKind::Scan) rec.relations.insert(node.relation);
  for (const Join& j : node.joins) rec.joins.insert(j);
  for (const Predicate& p : node.predicates) rec.predicates.push_back(p);
  for (const std::string& o : node.opaque_predicates) rec.opaque_predicates.push_back(o);
  for (const PlanTree& c : node.children) flatten_into(c, rec);
}

void enumerate_preorder(const PlanTree& node, const std::string& base_id,
                        std::size_t& index, std::vector<PlanRecord>& out) {
  PlanRecord rec;
  rec.plan_id = base_id + "#" + std::to_string(index);
  ++index;
  rec.estimated_cardinality = node.est_rows;
  rec.actual_cardinality = node.act_rows;
  flatten_into(node, rec);
  rec.validate();
  out.push_back(std::move(rec));
  for (const PlanTree& c : node.children) enumerate_preorder(c, base_id, index, out);
}

}  // namespace

std::vector<PlanRecord> enumerate_subplans(const PlanTree& tree, const std::string& base_id) {
  tree.validate();
  std::vector<PlanRecord> out;
  std::size_t index = 0;
  enumerate_preorder(tree, base_id, index, out);
  return out;
}

}  // namespace driftsel
