#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "driftsel/drift.hpp"

#include <cmath>
#include <random>

using namespace driftsel;

namespace {

PlanRecord template_over(std::set<std::string> relations) {
  PlanRecord r;
  r.plan_id = "tpl";
  r.relations = std::move(relations);
  r.estimated_cardinality = 1.0;
  r.actual_cardinality = 0;
  return r;
}

}  // namespace

TEST_CASE("cluster_buckets separates disjoint relation sets") {
  std::vector<PlanRecord> templates = {template_over({"A"}), template_over({"B"}),
                                       template_over({"C"})};
  auto assignment = cluster_buckets(templates, 3);
  CHECK(assignment.n_buckets() == 3);
  CHECK(assignment.bucket_of == std::vector<int>{0, 1, 2});
}

TEST_CASE("cluster_buckets groups identical relation sets") {
  std::vector<PlanRecord> templates = {template_over({"A", "B"}), template_over({"C"}),
                                       template_over({"A", "B"})};
  auto assignment = cluster_buckets(templates, 2);
  CHECK(assignment.bucket_of[0] == assignment.bucket_of[2]);
  CHECK(assignment.bucket_of[0] != assignment.bucket_of[1]);
}

TEST_CASE("cluster_buckets degenerate single bucket") {
  std::vector<PlanRecord> templates = {template_over({"A"}), template_over({"B"})};
  auto assignment = cluster_buckets(templates, 1);
  CHECK(assignment.bucket_of == std::vector<int>{0, 0});
}

TEST_CASE("cluster_buckets rejects fewer templates than buckets") {
  std::vector<PlanRecord> templates = {template_over({"A"})};
  CHECK_THROWS_AS(cluster_buckets(templates, 2), ValidationError);
}

TEST_CASE("cluster_buckets groups by similarity not identity") {
  std::vector<PlanRecord> templates = {
      template_over({"A", "B"}), template_over({"C", "D"}), template_over({"A", "B", "E"}),
      template_over({"C"})};
  auto assignment = cluster_buckets(templates, 2);
  CHECK(assignment.bucket_of[0] == assignment.bucket_of[2]);
  CHECK(assignment.bucket_of[1] == assignment.bucket_of[3]);
  CHECK(assignment.bucket_of[0] != assignment.bucket_of[1]);
}

TEST_CASE("hard_bucket follows the switch points") {
  HardSchedule sched{{200000, 400000}};
  CHECK(hard_bucket(0, sched) == 0);
  CHECK(hard_bucket(199999, sched) == 0);
  CHECK(hard_bucket(200000, sched) == 1);  // switch step belongs to the new bucket
  CHECK(hard_bucket(399999, sched) == 1);
  CHECK(hard_bucket(400000, sched) == 2);
  CHECK(hard_bucket(599999, sched) == 2);
}

TEST_CASE("hard_bucket with no switch points stays at 0") {
  HardSchedule sched{};
  CHECK(hard_bucket(0, sched) == 0);
  CHECK(hard_bucket(123456, sched) == 0);
}

TEST_CASE("hard_bucket is monotone non-decreasing") {
  HardSchedule sched{{100, 2000, 30000}};
  int prev = 0;
  for (std::int64_t t = 0; t < 40000; t += 7) {
    int b = hard_bucket(t, sched);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("soft_bucket_probs is a valid distribution everywhere") {
  auto sched = DriftSchedule::make_soft(3, 0.02);
  for (std::int64_t t = 0; t <= 1000; t += 13) {
    auto probs = soft_bucket_probs(t, 1000, sched.soft);
    Real total = 0.0;
    for (Real p : probs) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("soft_bucket_probs dominant at its own center") {
  SoftSchedule sched;
  sched.centers = {0.1, 0.5, 0.9};
  sched.width = 0.002;  // centers are >= 5*sqrt(d) apart
  auto probs = soft_bucket_probs(500, 1000, sched);
  CHECK(probs[1] > 0.999);
}

TEST_CASE("soft_bucket_probs symmetric at the midpoint of two centers") {
  SoftSchedule sched;
  sched.centers = {0.25, 0.5, 0.95};
  sched.width = 0.02;
  // tau = 0.375 is equidistant from 0.25 and 0.5; the third center is far
  auto probs = soft_bucket_probs(375, 1000, sched);
  CHECK(std::abs(probs[0] - probs[1]) < 1e-12);
}

TEST_CASE("soft_bucket_probs matches the direct formula") {
  // oracle: plain evaluation of the softmax without the log-space shift
  SoftSchedule sched;
  sched.centers = {0.25, 0.5, 0.75};
  sched.width = 0.02;
  const Real tau = 0.375;
  std::vector<Real> direct;
  Real total = 0.0;
  for (Real c : sched.centers) {
    direct.push_back(std::exp(-(tau - c) * (tau - c) / sched.width));
    total += direct.back();
  }
  for (Real& p : direct) p /= total;
  auto probs = soft_bucket_probs(375, 1000, sched);
  REQUIRE(probs.size() == direct.size());
  for (std::size_t b = 0; b < probs.size(); ++b) {
    CHECK(probs[b] == doctest::Approx(direct[b]).epsilon(1e-12));
  }
}

TEST_CASE("soft_bucket_probs converges to the nearest-center indicator as d -> 0") {
  SoftSchedule sched;
  sched.centers = {1.0 / 6.0, 0.5, 5.0 / 6.0};
  sched.width = 1e-6;
  for (std::int64_t t = 0; t <= 1000; t += 11) {
    const Real tau = t / 1000.0;
    // skip midpoints, where the indicator is ambiguous
    if (std::abs(tau - 1.0 / 3.0) < 0.02 || std::abs(tau - 2.0 / 3.0) < 0.02) continue;
    std::size_t nearest = 0;
    for (std::size_t b = 1; b < sched.centers.size(); ++b) {
      if (std::abs(tau - sched.centers[b]) < std::abs(tau - sched.centers[nearest])) nearest = b;
    }
    auto probs = soft_bucket_probs(t, 1000, sched);
    CHECK(probs[nearest] > 1.0 - 1e-9);
  }
}

TEST_CASE("soft_bucket_probs supports the raw-step parameterization") {
  // raw-step parameterization: centers in steps, d in squared steps
  SoftSchedule sched;
  sched.centers = {150000.0, 300000.0, 450000.0};
  sched.width = 3.0;
  sched.normalized = false;
  auto probs = soft_bucket_probs(150000, 600000, sched);
  CHECK(probs[0] > 1.0 - 1e-12);  // numerically an argmax of the nearest center
  probs = soft_bucket_probs(350000, 600000, sched);
  CHECK(probs[1] > 1.0 - 1e-12);
}

TEST_CASE("sample_bucket degenerate and uniform draws") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_bucket({1.0, 0.0, 0.0}, rng) == 0);
  }
  // uniform: each frequency within +-2% over 30k draws (binomial bound)
  std::vector<int> counts(3, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    ++counts[static_cast<std::size_t>(sample_bucket({1.0 / 3, 1.0 / 3, 1.0 / 3}, rng))];
  }
  for (int c : counts) {
    CHECK(std::abs(c / static_cast<Real>(n) - 1.0 / 3.0) < 0.02);
  }
}

TEST_CASE("sample_bucket is reproducible under the same seed") {
  std::mt19937_64 a(99), b(99);
  std::vector<Real> probs{0.2, 0.5, 0.3};
  for (int i = 0; i < 1000; ++i) {
    CHECK(sample_bucket(probs, a) == sample_bucket(probs, b));
  }
}
