#include "driftsel/correction.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace driftsel {

using nlohmann::json;

Real correction_ratio(const PlanRecord& record) {
  if (!(record.estimated_cardinality > 0.0)) {
    throw ValidationError("correction: estimated_cardinality must be > 0");
  }
  const Real y = std::max(static_cast<Real>(record.actual_cardinality), 1.0);
  return y / record.estimated_cardinality;
}

CorrectionTarget target_of(const PlanRecord& record) {
  return CorrectionTarget{record.plan_id, std::log(correction_ratio(record))};
}

void GlobalFactor::update(const PlanRecord& record) {
  const Real ratio = correction_ratio(record);
  ++n_;
  mean_ += (ratio - mean_) / static_cast<Real>(n_);
}

json GlobalFactor::save_state() const { return {{"n", n_}, {"mean", mean_}}; }

GlobalFactor GlobalFactor::from_state(const json& state) {
  GlobalFactor g;
  g.n_ = state.at("n").get<std::int64_t>();
  g.mean_ = state.at("mean").get<Real>();
  return g;
}

void SegmentedFactors::update(const PlanRecord& record) {
  const Real ratio = correction_ratio(record);
  Cell& c = cells_[static_cast<std::int64_t>(record.joins.size())];
  ++c.n;
  c.mean += (ratio - c.mean) / static_cast<Real>(c.n);
}

Real SegmentedFactors::factor(std::int64_t n_joins, const GlobalFactor& fallback) const {
  auto it = cells_.find(n_joins);
  if (it == cells_.end() || it->second.n == 0) return fallback.factor();
  return it->second.mean;
}

json SegmentedFactors::save_state() const {
  json cells = json::object();
  for (const auto& [j, c] : cells_) {
    cells[std::to_string(j)] = {{"n", c.n}, {"mean", c.mean}};
  }
  return {{"cells", cells}};
}

SegmentedFactors SegmentedFactors::from_state(const json& state) {
  SegmentedFactors s;
  for (const auto& [j, c] : state.at("cells").items()) {
    s.cells_[std::stoll(j)] = Cell{c.at("n").get<std::int64_t>(), c.at("mean").get<Real>()};
  }
  return s;
}

const char* strategy_name(CorrectionStrategy s) {
  switch (s) {
    case CorrectionStrategy::None: return "none";
    case CorrectionStrategy::Global: return "global";
    case CorrectionStrategy::PerJoinCount: return "per_join";
    case CorrectionStrategy::Model: return "model";
  }
  return "?";
}

std::optional<CorrectionStrategy> strategy_from_name(std::string_view name) {
  if (name == "none") return CorrectionStrategy::None;
  if (name == "global") return CorrectionStrategy::Global;
  if (name == "per_join" || name == "per-join") return CorrectionStrategy::PerJoinCount;
  if (name == "model") return CorrectionStrategy::Model;
  return std::nullopt;
}

Real correct(const PlanRecord& record, CorrectionStrategy strategy,
             const GlobalFactor& global, const SegmentedFactors& per_join,
             std::optional<Real> z_hat, FactorClamp clamp) {
  if (!(record.estimated_cardinality > 0.0)) {
    throw ValidationError("correct: estimated_cardinality must be > 0");
  }
  const Real y_hat = record.estimated_cardinality;
  Real corrected = y_hat;
  switch (strategy) {
    case CorrectionStrategy::None:
      break;
    case CorrectionStrategy::Global:
      corrected = y_hat * global.factor();
      break;
    case CorrectionStrategy::PerJoinCount:
      corrected = y_hat * per_join.factor(static_cast<std::int64_t>(record.joins.size()), global);
      break;
    case CorrectionStrategy::Model: {
      if (!z_hat) throw ValidationError("correct: model strategy requires a prediction");
      const Real factor = std::clamp(std::exp(*z_hat), clamp.lo, clamp.hi);
      corrected = y_hat * factor;
      break;
    }
  }
  return std::max(corrected, 1.0);
}

}  // namespace driftsel
