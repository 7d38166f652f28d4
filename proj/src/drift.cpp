#include "driftsel/drift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace driftsel {

namespace {

Real jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<Real>(inter) / static_cast<Real>(uni);
}

}  // namespace

BucketAssignment cluster_buckets(const std::vector<PlanRecord>& templates, int n_buckets) {
  if (n_buckets < 1) throw ValidationError("cluster_buckets: need at least one bucket");
  if (static_cast<int>(templates.size()) < n_buckets) {
    throw ValidationError("cluster_buckets: fewer templates than buckets");
  }

  struct Cluster {
    std::set<std::string> relations;
    std::vector<std::size_t> members;
  };
  std::vector<Cluster> clusters;
  clusters.reserve(templates.size());
  for (std::size_t i = 0; i < templates.size(); ++i) {
    clusters.push_back({templates[i].relations, {i}});
  }

  // Merge the most similar pair until B clusters remain; ties resolve to the
  // lowest index pair so the result is deterministic under input order.
  while (static_cast<int>(clusters.size()) > n_buckets) {
    std::size_t best_i = 0, best_j = 1;
    Real best_sim = -1.0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const Real sim = jaccard(clusters[i].relations, clusters[j].relations);
        if (sim > best_sim) {
          best_sim = sim;
          best_i = i;
          best_j = j;
        }
      }
    }
    Cluster& dst = clusters[best_i];
    Cluster& src = clusters[best_j];
    dst.relations.insert(src.relations.begin(), src.relations.end());
    dst.members.insert(dst.members.end(), src.members.begin(), src.members.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_j));
  }

  // Bucket ids follow the order of each cluster's first template.
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return *std::min_element(a.members.begin(), a.members.end()) <
           *std::min_element(b.members.begin(), b.members.end());
  });

  BucketAssignment out;
  out.bucket_of.assign(templates.size(), -1);
  out.templates_of.resize(clusters.size());
  for (std::size_t b = 0; b < clusters.size(); ++b) {
    std::vector<std::size_t> members = clusters[b].members;
    std::sort(members.begin(), members.end());
    for (std::size_t m : members) out.bucket_of[m] = static_cast<int>(b);
    out.templates_of[b] = std::move(members);
  }
  return out;
}

DriftSchedule DriftSchedule::make_hard(std::vector<std::int64_t> switch_points) {
  DriftSchedule s;
  s.mode = Mode::Hard;
  s.hard.switch_points = std::move(switch_points);
  for (std::size_t i = 1; i < s.hard.switch_points.size(); ++i) {
    if (s.hard.switch_points[i] <= s.hard.switch_points[i - 1]) {
      throw ValidationError("drift schedule: switch points must be strictly increasing");
    }
  }
  return s;
}

DriftSchedule DriftSchedule::make_soft(int n_buckets, Real width) {
  if (!(width > 0.0)) throw ValidationError("drift schedule: width d must be > 0");
  DriftSchedule s;
  s.mode = Mode::Soft;
  s.soft.width = width;
  for (int b = 0; b < n_buckets; ++b) {
    s.soft.centers.push_back((static_cast<Real>(b) + 0.5) / static_cast<Real>(n_buckets));
  }
  return s;
}

int hard_bucket(std::int64_t t, const HardSchedule& schedule) {
  int bucket = 0;
  for (std::int64_t sp : schedule.switch_points) {
    if (t >= sp) ++bucket;
  }
  return bucket;
}

std::vector<Real> soft_bucket_probs(std::int64_t t, std::int64_t n, const SoftSchedule& schedule) {
  if (!(schedule.width > 0.0)) throw ValidationError("soft_bucket_probs: width d must be > 0");
  if (schedule.centers.empty()) throw ValidationError("soft_bucket_probs: no centers");
  const Real tau = schedule.normalized
                       ? static_cast<Real>(t) / static_cast<Real>(std::max<std::int64_t>(n, 1))
                       : static_cast<Real>(t);
  std::vector<Real> logits;
  logits.reserve(schedule.centers.size());
  Real max_logit = -std::numeric_limits<Real>::infinity();
  for (Real center : schedule.centers) {
    const Real d = tau - center;
    logits.push_back(-(d * d) / schedule.width);
    max_logit = std::max(max_logit, logits.back());
  }
  Real total = 0.0;
  for (Real& l : logits) {
    l = std::exp(l - max_logit);
    total += l;
  }
  for (Real& l : logits) l /= total;
  return logits;
}

int sample_bucket(const std::vector<Real>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  const Real draw = u(rng);
  Real cum = 0.0;
  for (std::size_t b = 0; b < probs.size(); ++b) {
    cum += probs[b];
    if (draw < cum) return static_cast<int>(b);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace driftsel
