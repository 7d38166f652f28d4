#pragma once

#include "driftsel/plan.hpp"
#include "driftsel/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <optional>
#include <string>

namespace driftsel {

/// Learning target z = ln(max(y, 1) / y_hat); exp(z) recovers the clamped
/// underestimation ratio.
struct CorrectionTarget {
  std::string plan_id;
  Real z = 0.0;
};

CorrectionTarget target_of(const PlanRecord& record);

/// Running mean of raw ratios y/y_hat, the coarsest correction tier.
/// Neutral (c = 1) before any update.
class GlobalFactor {
 public:
  void update(const PlanRecord& record);
  Real factor() const { return n_ == 0 ? 1.0 : mean_; }
  std::int64_t count() const { return n_; }

  nlohmann::json save_state() const;
  static GlobalFactor from_state(const nlohmann::json& state);

 private:
  std::int64_t n_ = 0;
  Real mean_ = 0.0;
};

/// One correction factor per join count, falling back to the global factor
/// for unseen join counts.
class SegmentedFactors {
 public:
  void update(const PlanRecord& record);
  Real factor(std::int64_t n_joins, const GlobalFactor& fallback) const;

  nlohmann::json save_state() const;
  static SegmentedFactors from_state(const nlohmann::json& state);

 private:
  struct Cell {
    std::int64_t n = 0;
    Real mean = 0.0;
  };
  std::map<std::int64_t, Cell> cells_;
};

enum class CorrectionStrategy { None, Global, PerJoinCount, Model };

const char* strategy_name(CorrectionStrategy s);
std::optional<CorrectionStrategy> strategy_from_name(std::string_view name);

struct FactorClamp {
  Real lo = 1e-4;
  Real hi = 1e4;
};

/// Corrected cardinality for the record under the given strategy. For the
/// model strategy z_hat must carry the regressor's prediction. Results are
/// clamped to >= 1 row; model-predicted factors additionally to [lo, hi].
Real correct(const PlanRecord& record, CorrectionStrategy strategy,
             const GlobalFactor& global, const SegmentedFactors& per_join,
             std::optional<Real> z_hat = std::nullopt, FactorClamp clamp = {});

/// Clamped ratio max(y,1)/y_hat used by both factor accumulators.
Real correction_ratio(const PlanRecord& record);

}  // namespace driftsel
