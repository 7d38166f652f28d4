#include "driftsel/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

namespace driftsel {

using nlohmann::json;

void SynthSchema::validate() const {
  if (relations.empty()) throw ValidationError("schema: needs at least one relation");
  std::map<std::string, const RelationSpec*> by_name;
  for (const RelationSpec& rel : relations) {
    if (rel.row_count < 1) throw ValidationError("schema: row_count must be >= 1");
    if (rel.attributes.empty()) throw ValidationError("schema: relation needs attributes");
    if (!by_name.emplace(rel.name, &rel).second) {
      throw ValidationError("schema: duplicate relation \"" + rel.name + "\"");
    }
    std::set<std::string> attr_names;
    for (const AttributeSpec& a : rel.attributes) {
      if (a.domain < 2) throw ValidationError("schema: attribute domain must be >= 2");
      if (!attr_names.insert(a.name).second) {
        throw ValidationError("schema: duplicate attribute \"" + rel.name + "." + a.name + "\"");
      }
    }
  }
  auto has_attr = [&](const std::string& rel, const std::string& attr) {
    auto it = by_name.find(rel);
    if (it == by_name.end()) return false;
    for (const AttributeSpec& a : it->second->attributes) {
      if (a.name == attr) return true;
    }
    return false;
  };
  for (const CorrelationSpec& c : correlations) {
    if (!has_attr(c.relation, c.attr_a) || !has_attr(c.relation, c.attr_b)) {
      throw ValidationError("schema: correlation references undeclared attribute");
    }
    if (c.mode == CorrelationMode::NoisyCopy &&
        (c.copy_probability < 0.0 || c.copy_probability > 1.0)) {
      throw ValidationError("schema: noisy-copy probability must lie in [0, 1]");
    }
  }
  for (const Join& j : join_keys) {
    if (!has_attr(j.left.relation, j.left.attribute) ||
        !has_attr(j.right.relation, j.right.attribute)) {
      throw ValidationError("schema: join key references undeclared attribute");
    }
  }
}

namespace {

AttrDistribution distribution_from_string(const std::string& s) {
  if (s == "uniform") return AttrDistribution::Uniform;
  if (s == "zipf") return AttrDistribution::Zipf;
  throw ValidationError("schema: unknown distribution \"" + s + "\"");
}

CorrelationMode mode_from_string(const std::string& s) {
  if (s == "independent") return CorrelationMode::Independent;
  if (s == "equal") return CorrelationMode::Equal;
  if (s == "noisy_copy" || s == "noisy-copy") return CorrelationMode::NoisyCopy;
  throw ValidationError("schema: unknown correlation mode \"" + s + "\"");
}

AttrRef attr_ref_from_string(const std::string& s) {
  auto dot = s.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == s.size()) {
    throw ValidationError("schema: expected \"relation.attribute\", got \"" + s + "\"");
  }
  return AttrRef{s.substr(0, dot), s.substr(dot + 1)};
}

}  // namespace

SynthSchema SynthSchema::from_json(const json& doc) {
  SynthSchema schema;
  schema.seed = doc.at("seed").get<std::uint64_t>();
  for (const auto& rj : doc.at("relations")) {
    RelationSpec rel;
    rel.name = rj.at("name").get<std::string>();
    rel.row_count = rj.at("rows").get<std::int64_t>();
    for (const auto& aj : rj.at("attributes")) {
      AttributeSpec attr;
      attr.name = aj.at("name").get<std::string>();
      attr.domain = aj.at("domain").get<std::int64_t>();
      attr.distribution = distribution_from_string(aj.value("distribution", "uniform"));
      attr.zipf_s = aj.value("s", 1.0);
      rel.attributes.push_back(std::move(attr));
    }
    schema.relations.push_back(std::move(rel));
  }
  if (doc.contains("correlations")) {
    for (const auto& cj : doc.at("correlations")) {
      CorrelationSpec c;
      c.relation = cj.at("relation").get<std::string>();
      c.attr_a = cj.at("a").get<std::string>();
      c.attr_b = cj.at("b").get<std::string>();
      c.mode = mode_from_string(cj.at("mode").get<std::string>());
      c.copy_probability = cj.value("p", 1.0);
      schema.correlations.push_back(std::move(c));
    }
  }
  if (doc.contains("join_keys")) {
    for (const auto& jj : doc.at("join_keys")) {
      schema.join_keys.emplace_back(attr_ref_from_string(jj.at("left").get<std::string>()),
                                    attr_ref_from_string(jj.at("right").get<std::string>()));
    }
  }
  schema.validate();
  return schema;
}

json SynthSchema::to_json() const {
  json doc;
  doc["seed"] = seed;
  doc["relations"] = json::array();
  for (const RelationSpec& rel : relations) {
    json rj;
    rj["name"] = rel.name;
    rj["rows"] = rel.row_count;
    rj["attributes"] = json::array();
    for (const AttributeSpec& a : rel.attributes) {
      json aj = {{"name", a.name}, {"domain", a.domain}};
      aj["distribution"] = a.distribution == AttrDistribution::Uniform ? "uniform" : "zipf";
      if (a.distribution == AttrDistribution::Zipf) aj["s"] = a.zipf_s;
      rj["attributes"].push_back(std::move(aj));
    }
    doc["relations"].push_back(std::move(rj));
  }
  doc["correlations"] = json::array();
  for (const CorrelationSpec& c : correlations) {
    json cj = {{"relation", c.relation}, {"a", c.attr_a}, {"b", c.attr_b}};
    switch (c.mode) {
      case CorrelationMode::Independent: cj["mode"] = "independent"; break;
      case CorrelationMode::Equal: cj["mode"] = "equal"; break;
      case CorrelationMode::NoisyCopy:
        cj["mode"] = "noisy_copy";
        cj["p"] = c.copy_probability;
        break;
    }
    doc["correlations"].push_back(std::move(cj));
  }
  doc["join_keys"] = json::array();
  for (const Join& j : join_keys) {
    doc["join_keys"].push_back({{"left", j.left.relation + "." + j.left.attribute},
                                {"right", j.right.relation + "." + j.right.attribute}});
  }
  return doc;
}

void SynthDatabase::Column::finalize(std::int64_t domain_size) {
  domain = domain_size;
  histogram.assign(static_cast<std::size_t>(domain), 0);
  row_index.assign(static_cast<std::size_t>(domain), {});
  for (std::size_t row = 0; row < values.size(); ++row) {
    const std::int64_t v = values[row];
    ++histogram[static_cast<std::size_t>(v)];
    row_index[static_cast<std::size_t>(v)].push_back(static_cast<std::int32_t>(row));
  }
  distinct = 0;
  for (std::int64_t c : histogram) {
    if (c > 0) ++distinct;
  }
}

const SynthDatabase::Relation& SynthDatabase::relation(const std::string& name) const {
  auto it = relations_.find(name);
  if (it == relations_.end()) throw LookupError("unknown relation \"" + name + "\"");
  return it->second;
}

const SynthDatabase::Column& SynthDatabase::column(const std::string& rel,
                                                   const std::string& attribute) const {
  const Relation& r = relation(rel);
  auto it = r.columns.find(attribute);
  if (it == r.columns.end()) {
    throw LookupError("unknown attribute \"" + rel + "." + attribute + "\"");
  }
  return it->second;
}

namespace {

class ValueSampler {
 public:
  ValueSampler(const AttributeSpec& spec) : domain_(spec.domain) {
    if (spec.distribution == AttrDistribution::Zipf) {
      cumulative_.resize(static_cast<std::size_t>(spec.domain));
      Real total = 0.0;
      for (std::int64_t v = 0; v < spec.domain; ++v) {
        total += std::pow(static_cast<Real>(v + 1), -spec.zipf_s);
        cumulative_[static_cast<std::size_t>(v)] = total;
      }
      for (Real& c : cumulative_) c /= total;
    }
  }

  std::int64_t draw(std::mt19937_64& rng) const {
    if (cumulative_.empty()) {
      std::uniform_int_distribution<std::int64_t> u(0, domain_ - 1);
      return u(rng);
    }
    std::uniform_real_distribution<Real> u(0.0, 1.0);
    const Real x = u(rng);
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), x);
    return std::min<std::int64_t>(static_cast<std::int64_t>(it - cumulative_.begin()),
                                  domain_ - 1);
  }

 private:
  std::int64_t domain_;
  std::vector<Real> cumulative_;
};

}  // namespace

SynthDatabase generate_database(const SynthSchema& schema) {
  schema.validate();
  SynthDatabase db;
  for (const RelationSpec& rel_spec : schema.relations) {
    SynthDatabase::Relation rel;
    rel.name = rel_spec.name;
    rel.row_count = rel_spec.row_count;
    for (const AttributeSpec& attr : rel_spec.attributes) {
      std::mt19937_64 rng(
          substream_seed(schema.seed, "col:" + rel_spec.name + "." + attr.name));
      ValueSampler sampler(attr);
      SynthDatabase::Column col;
      col.values.resize(static_cast<std::size_t>(rel_spec.row_count));
      for (auto& v : col.values) v = sampler.draw(rng);
      rel.columns.emplace(attr.name, std::move(col));
    }
    db.mutable_relations().emplace(rel.name, std::move(rel));
  }

  // Correlations overwrite attr_b, in declaration order.
  for (const CorrelationSpec& corr : schema.correlations) {
    if (corr.mode == CorrelationMode::Independent) continue;
    auto& rel = db.mutable_relations().at(corr.relation);
    const auto& src = rel.columns.at(corr.attr_a).values;
    auto& dst = rel.columns.at(corr.attr_b).values;
    if (corr.mode == CorrelationMode::Equal) {
      dst = src;
      continue;
    }
    const RelationSpec* rel_spec = nullptr;
    for (const RelationSpec& rs : schema.relations) {
      if (rs.name == corr.relation) rel_spec = &rs;
    }
    const AttributeSpec* attr_spec = nullptr;
    for (const AttributeSpec& as : rel_spec->attributes) {
      if (as.name == corr.attr_b) attr_spec = &as;
    }
    ValueSampler sampler(*attr_spec);
    std::mt19937_64 rng(substream_seed(
        schema.seed, "corr:" + corr.relation + "." + corr.attr_a + "->" + corr.attr_b));
    std::uniform_real_distribution<Real> u(0.0, 1.0);
    for (std::size_t row = 0; row < dst.size(); ++row) {
      dst[row] = u(rng) < corr.copy_probability ? src[row] : sampler.draw(rng);
    }
  }

  for (auto& [name, rel] : db.mutable_relations()) {
    const RelationSpec* rel_spec = nullptr;
    for (const RelationSpec& rs : schema.relations) {
      if (rs.name == name) rel_spec = &rs;
    }
    for (const AttributeSpec& attr : rel_spec->attributes) {
      rel.columns.at(attr.name).finalize(attr.domain);
    }
  }
  return db;
}

namespace {

Real literal_as_number(const Literal& lit) {
  if (!std::holds_alternative<Real>(lit)) {
    throw LookupError("synthetic data: string literal \"" + std::get<std::string>(lit) +
                      "\" cannot be evaluated against integer domains");
  }
  return std::get<Real>(lit);
}

bool value_matches(std::int64_t value, CmpOp op, Real literal) {
  const Real v = static_cast<Real>(value);
  switch (op) {
    case CmpOp::Eq: return v == literal;
    case CmpOp::Lt: return v < literal;
    case CmpOp::Le: return v <= literal;
    case CmpOp::Gt: return v > literal;
    case CmpOp::Ge: return v >= literal;
  }
  return false;
}

}  // namespace

Real avi_estimate(const PlanRecord& record, const SynthDatabase& db, Real eps) {
  Real estimate = 1.0;
  for (const auto& rel_name : record.relations) {
    estimate *= static_cast<Real>(db.relation(rel_name).row_count);
  }
  for (const Predicate& pred : record.predicates) {
    const auto& col = db.column(pred.relation, pred.attribute);
    const Real lit = literal_as_number(pred.literal);
    std::int64_t matching = 0;
    for (std::int64_t v = 0; v < col.domain; ++v) {
      if (value_matches(v, pred.op, lit)) matching += col.histogram[static_cast<std::size_t>(v)];
    }
    const std::int64_t rows = db.relation(pred.relation).row_count;
    estimate *= static_cast<Real>(matching) / static_cast<Real>(rows);
  }
  for (const Join& join : record.joins) {
    const auto& left = db.column(join.left.relation, join.left.attribute);
    const auto& right = db.column(join.right.relation, join.right.attribute);
    const std::int64_t distinct = std::max<std::int64_t>(
        std::max(left.distinct, right.distinct), 1);
    estimate /= static_cast<Real>(distinct);
  }
  return std::max(estimate, eps);
}

namespace {

struct RelationScan {
  std::string name;
  const SynthDatabase::Relation* rel = nullptr;
  std::vector<std::int32_t> filtered_rows;
  std::vector<char> filtered_mask;
  // joins to already-bound relations: (own column, other relation index, other column)
  struct Bound {
    const SynthDatabase::Column* own = nullptr;
    std::size_t other_scan = 0;
    const SynthDatabase::Column* other = nullptr;
  };
  std::vector<Bound> bound_joins;
};

}  // namespace

std::int64_t true_cardinality(const PlanRecord& record, const SynthDatabase& db,
                              Real safety_bound) {
  if (!record.opaque_predicates.empty()) {
    throw ValidationError("true_cardinality: opaque predicates cannot be evaluated");
  }

  std::vector<RelationScan> scans;
  std::map<std::string, std::size_t> scan_of;
  for (const auto& rel_name : record.relations) {
    RelationScan scan;
    scan.name = rel_name;
    scan.rel = &db.relation(rel_name);
    scan_of.emplace(rel_name, scans.size());
    scans.push_back(std::move(scan));
  }

  // Per-relation predicate filtering.
  Real product = 1.0;
  for (RelationScan& scan : scans) {
    std::vector<const Predicate*> preds;
    for (const Predicate& p : record.predicates) {
      if (p.relation == scan.name) preds.push_back(&p);
    }
    const std::int64_t rows = scan.rel->row_count;
    scan.filtered_mask.assign(static_cast<std::size_t>(rows), 1);
    for (const Predicate* p : preds) {
      const auto& col = db.column(p->relation, p->attribute);
      const Real lit = literal_as_number(p->literal);
      for (std::int64_t r = 0; r < rows; ++r) {
        if (scan.filtered_mask[static_cast<std::size_t>(r)] &&
            !value_matches(col.values[static_cast<std::size_t>(r)], p->op, lit)) {
          scan.filtered_mask[static_cast<std::size_t>(r)] = 0;
        }
      }
    }
    for (std::int64_t r = 0; r < rows; ++r) {
      if (scan.filtered_mask[static_cast<std::size_t>(r)]) {
        scan.filtered_rows.push_back(static_cast<std::int32_t>(r));
      }
    }
    if (scan.filtered_rows.empty()) return 0;
    product *= static_cast<Real>(scan.filtered_rows.size());
  }
  if (product > safety_bound) {
    throw ResourceError("true_cardinality: join product exceeds the safety bound");
  }

  // Order the scans so each one (past the first) joins something already
  // bound when the join graph allows it, then count by backtracking.
  std::vector<std::size_t> order;
  std::vector<char> placed(scans.size(), 0);
  while (order.size() < scans.size()) {
    std::size_t next = scans.size();
    for (std::size_t i = 0; i < scans.size() && next == scans.size(); ++i) {
      if (placed[i]) continue;
      if (order.empty()) {
        next = i;
        break;
      }
      for (const Join& j : record.joins) {
        const std::size_t l = scan_of.at(j.left.relation);
        const std::size_t r = scan_of.at(j.right.relation);
        if ((l == i && placed[r]) || (r == i && placed[l])) {
          next = i;
          break;
        }
      }
    }
    if (next == scans.size()) {
      for (std::size_t i = 0; i < scans.size(); ++i) {
        if (!placed[i]) {
          next = i;
          break;
        }
      }
    }
    placed[next] = 1;
    order.push_back(next);
  }

  std::vector<std::size_t> level_of(scans.size());
  for (std::size_t lvl = 0; lvl < order.size(); ++lvl) level_of[order[lvl]] = lvl;
  for (const Join& j : record.joins) {
    const std::size_t l = scan_of.at(j.left.relation);
    const std::size_t r = scan_of.at(j.right.relation);
    const std::size_t later = level_of[l] > level_of[r] ? l : r;
    const std::size_t earlier = later == l ? r : l;
    const auto& later_attr = later == l ? j.left : j.right;
    const auto& earlier_attr = later == l ? j.right : j.left;
    scans[later].bound_joins.push_back({&db.column(later_attr.relation, later_attr.attribute),
                                        earlier,
                                        &db.column(earlier_attr.relation, earlier_attr.attribute)});
  }

  std::vector<std::int32_t> chosen(scans.size(), -1);
  std::int64_t count = 0;

  std::function<void(std::size_t)> recurse = [&](std::size_t level) {
    if (level == order.size()) {
      ++count;
      return;
    }
    RelationScan& scan = scans[order[level]];
    auto row_ok = [&](std::int32_t row) {
      if (!scan.filtered_mask[static_cast<std::size_t>(row)]) return false;
      for (const auto& bj : scan.bound_joins) {
        const std::int64_t own_val = bj.own->values[static_cast<std::size_t>(row)];
        const std::int64_t other_val =
            bj.other->values[static_cast<std::size_t>(chosen[bj.other_scan])];
        if (own_val != other_val) return false;
      }
      return true;
    };
    if (!scan.bound_joins.empty()) {
      // iterate candidates from the first bound join's value index
      const auto& bj = scan.bound_joins.front();
      const std::int64_t match_val =
          bj.other->values[static_cast<std::size_t>(chosen[bj.other_scan])];
      if (match_val < 0 || match_val >= bj.own->domain) return;
      for (std::int32_t row : bj.own->row_index[static_cast<std::size_t>(match_val)]) {
        if (row_ok(row)) {
          chosen[order[level]] = row;
          recurse(level + 1);
        }
      }
    } else {
      for (std::int32_t row : scan.filtered_rows) {
        chosen[order[level]] = row;
        recurse(level + 1);
      }
    }
    chosen[order[level]] = -1;
  };
  recurse(0);
  return count;
}

std::vector<WorkloadItem> generate_workload(const SynthDatabase& db,
                                            const std::vector<PlanRecord>& templates,
                                            const BucketAssignment& assignment,
                                            const DriftSchedule& schedule, std::int64_t n,
                                            std::uint64_t seed) {
  if (assignment.bucket_of.size() != templates.size()) {
    throw ValidationError("generate_workload: assignment does not cover the templates");
  }
  std::mt19937_64 rng(substream_seed(seed, "workload"));
  std::vector<WorkloadItem> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t t = 0; t < n; ++t) {
    int bucket = 0;
    if (schedule.mode == DriftSchedule::Mode::Hard) {
      bucket = hard_bucket(t, schedule.hard);
      bucket = std::min(bucket, assignment.n_buckets() - 1);
    } else {
      bucket = sample_bucket(soft_bucket_probs(t, n, schedule.soft), rng);
    }
    const auto& candidates = assignment.templates_of.at(static_cast<std::size_t>(bucket));
    if (candidates.empty()) {
      throw ValidationError("generate_workload: bucket without templates");
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const std::size_t template_index = candidates[pick(rng)];

    PlanRecord record = templates[template_index];
    record.plan_id = "w" + std::to_string(t);
    std::map<std::string, Real> placeholder_values;
    for (Predicate& pred : record.predicates) {
      if (!std::holds_alternative<std::string>(pred.literal)) continue;
      const std::string& tag = std::get<std::string>(pred.literal);
      if (tag.empty() || tag[0] != '$') continue;
      auto it = placeholder_values.find(tag);
      if (it == placeholder_values.end()) {
        const auto& col = db.column(pred.relation, pred.attribute);
        std::uniform_int_distribution<std::int64_t> draw(0, col.domain - 1);
        it = placeholder_values.emplace(tag, static_cast<Real>(draw(rng))).first;
      }
      pred.literal = Literal(it->second);
    }
    record.estimated_cardinality = avi_estimate(record, db);
    record.actual_cardinality = true_cardinality(record, db);
    record.validate();
    out.push_back(WorkloadItem{std::move(record), bucket, template_index});
  }
  return out;
}

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

template <typename T>
void write_pod(std::ofstream& out, T value) {
  write_bytes(out, &value, sizeof(T));
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("database snapshot: truncated file");
  return value;
}

std::string read_string(std::ifstream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw ParseError("database snapshot: truncated string");
  return s;
}

constexpr std::uint8_t kSnapshotVersion = 1;

}  // namespace

void save_database(const SynthDatabase& db, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("cannot open \"" + path + "\" for writing");
  write_pod<std::uint8_t>(out, kSnapshotVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(db.relations().size()));
  for (const auto& [name, rel] : db.relations()) {
    write_string(out, name);
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(rel.row_count));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rel.columns.size()));
    for (const auto& [attr, col] : rel.columns) {
      write_string(out, attr);
      write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(col.domain));
      for (std::int64_t v : col.values) write_pod<std::int64_t>(out, v);
    }
  }
  if (!out) throw ResourceError("failed writing \"" + path + "\"");
}

SynthDatabase load_database(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open \"" + path + "\"");
  const auto version = read_pod<std::uint8_t>(in);
  if (version != kSnapshotVersion) {
    throw ParseError("database snapshot: unsupported version " + std::to_string(version));
  }
  SynthDatabase db;
  const auto n_relations = read_pod<std::uint32_t>(in);
  for (std::uint32_t r = 0; r < n_relations; ++r) {
    SynthDatabase::Relation rel;
    rel.name = read_string(in);
    rel.row_count = static_cast<std::int64_t>(read_pod<std::uint64_t>(in));
    const auto n_cols = read_pod<std::uint32_t>(in);
    for (std::uint32_t c = 0; c < n_cols; ++c) {
      const std::string attr = read_string(in);
      SynthDatabase::Column col;
      const auto domain = static_cast<std::int64_t>(read_pod<std::uint64_t>(in));
      col.values.resize(static_cast<std::size_t>(rel.row_count));
      for (auto& v : col.values) v = read_pod<std::int64_t>(in);
      col.finalize(domain);
      rel.columns.emplace(attr, std::move(col));
    }
    db.mutable_relations().emplace(rel.name, std::move(rel));
  }
  return db;
}

}  // namespace driftsel
