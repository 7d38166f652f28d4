#pragma once

#include "driftsel/plan.hpp"
#include "driftsel/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace driftsel {

/// template index -> bucket id, plus the inverse lookup.
struct BucketAssignment {
  std::vector<int> bucket_of;             // indexed by template position
  std::vector<std::vector<std::size_t>> templates_of;  // indexed by bucket id

  int n_buckets() const { return static_cast<int>(templates_of.size()); }
};

/// Greedy agglomerative grouping of templates into B buckets by Jaccard
/// similarity of their relation sets. Deterministic under input order.
BucketAssignment cluster_buckets(const std::vector<PlanRecord>& templates, int n_buckets);

struct HardSchedule {
  std::vector<std::int64_t> switch_points;  // strictly increasing
};

struct SoftSchedule {
  std::vector<Real> centers;  // one per bucket, in normalized time by default
  Real width = 0.02;          // d of the softmax; larger is more abrupt
  bool normalized = true;     // when false, centers and t are raw step indices
};

struct DriftSchedule {
  enum class Mode { Hard, Soft } mode = Mode::Hard;
  HardSchedule hard;
  SoftSchedule soft;

  static DriftSchedule make_hard(std::vector<std::int64_t> switch_points);
  static DriftSchedule make_soft(int n_buckets, Real width);
};

/// Piecewise-constant bucket id: the number of switch points <= t. A step
/// exactly at a switch point belongs to the new bucket.
int hard_bucket(std::int64_t t, const HardSchedule& schedule);

/// Softmax over squared distances to the bucket centers, computed in log
/// space so no underflow occurs;
/// the output sums to 1 within 1e-12.
std::vector<Real> soft_bucket_probs(std::int64_t t, std::int64_t n, const SoftSchedule& schedule);

/// Seeded categorical draw.
int sample_bucket(const std::vector<Real>& probs, std::mt19937_64& rng);

}  // namespace driftsel
