#include "driftsel/learners.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace driftsel {

using nlohmann::json;

namespace {

Real value_or_zero(const FeatureVector& x, const std::string& name) {
  auto it = x.find(name);
  return it == x.end() ? 0.0 : it->second;
}

struct BinStats {
  std::int64_t n = 0;
  Real sum = 0.0;
  Real sumsq = 0.0;

  void add(Real y) {
    ++n;
    sum += y;
    sumsq += y * y;
  }
};

Real sse(std::int64_t n, Real sum, Real sumsq) {
  if (n == 0) return 0.0;
  return std::max(sumsq - sum * sum / static_cast<Real>(n), 0.0);
}

}  // namespace

struct HoeffdingTreeRegressor::Node {
  bool is_leaf = true;
  int depth = 0;

  // branch
  std::string split_feature;
  Real threshold = 0.0;
  std::unique_ptr<Node> left;
  std::unique_ptr<Node> right;

  // leaf
  std::int64_t count = 0;
  Real sum = 0.0;
  Real sumsq = 0.0;
  std::int64_t since_attempt = 0;
  bool bins_frozen = false;
  std::vector<std::pair<FeatureVector, Real>> buffer;

  struct FeatureBins {
    Real lo = 0.0;
    Real hi = 0.0;
    std::vector<BinStats> bins;
  };
  std::map<std::string, FeatureBins> bins;

  Real mean() const { return count > 0 ? sum / static_cast<Real>(count) : 0.0; }

  int bin_index(const FeatureBins& fb, Real v, int n_bins) const {
    if (fb.hi <= fb.lo) return 0;
    int idx = static_cast<int>(std::floor((v - fb.lo) / (fb.hi - fb.lo) *
                                          static_cast<Real>(n_bins)));
    return std::clamp(idx, 0, n_bins - 1);
  }

  void add_to_bins(const FeatureVector& x, Real y, int n_bins) {
    for (auto& [name, fb] : bins) {
      if (fb.bins.empty()) continue;
      fb.bins[static_cast<std::size_t>(bin_index(fb, value_or_zero(x, name), n_bins))].add(y);
    }
  }
};

HoeffdingTreeRegressor::HoeffdingTreeRegressor(HoeffdingConfig config)
    : cfg_(config), root_(std::make_unique<Node>()) {}

HoeffdingTreeRegressor::~HoeffdingTreeRegressor() = default;
HoeffdingTreeRegressor::HoeffdingTreeRegressor(HoeffdingTreeRegressor&&) noexcept = default;
HoeffdingTreeRegressor& HoeffdingTreeRegressor::operator=(HoeffdingTreeRegressor&&) noexcept =
    default;

Real HoeffdingTreeRegressor::predict(const FeatureVector& x) const {
  const Node* node = root_.get();
  while (!node->is_leaf) {
    node = value_or_zero(x, node->split_feature) <= node->threshold ? node->left.get()
                                                                    : node->right.get();
  }
  if (node->count > 0) return node->mean();
  return total_ > 0 ? global_mean_ : 0.0;
}

void HoeffdingTreeRegressor::learn(const FeatureVector& x, Real y) {
  require_finite(x);
  require_finite(y, "target");

  ++total_;
  global_mean_ += (y - global_mean_) / static_cast<Real>(total_);
  if (total_ == 1) {
    target_min_ = target_max_ = y;
  } else {
    target_min_ = std::min(target_min_, y);
    target_max_ = std::max(target_max_, y);
  }

  Node* node = root_.get();
  while (!node->is_leaf) {
    node = value_or_zero(x, node->split_feature) <= node->threshold ? node->left.get()
                                                                    : node->right.get();
  }
  ++node->count;
  node->sum += y;
  node->sumsq += y * y;
  if (node->depth < cfg_.max_depth) {
    if (node->bins_frozen) {
      node->add_to_bins(x, y, cfg_.n_bins);
    } else {
      node->buffer.emplace_back(x, y);
    }
    ++node->since_attempt;
    if (node->since_attempt >= cfg_.grace_period) {
      try_split(*node);
    }
  }
}

void HoeffdingTreeRegressor::try_split(Node& leaf) {
  leaf.since_attempt = 0;

  if (!leaf.bins_frozen) {
    // Freeze bin edges from the observed range of the first batch, then flush.
    std::set<std::string> names;
    for (const auto& [x, y] : leaf.buffer) {
      for (const auto& [name, v] : x) names.insert(name);
    }
    for (const auto& name : names) {
      Real lo = std::numeric_limits<Real>::infinity();
      Real hi = -std::numeric_limits<Real>::infinity();
      for (const auto& [x, y] : leaf.buffer) {
        const Real v = value_or_zero(x, name);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      Node::FeatureBins fb;
      fb.lo = lo;
      fb.hi = hi;
      if (hi > lo) fb.bins.resize(static_cast<std::size_t>(cfg_.n_bins));
      leaf.bins.emplace(name, std::move(fb));
    }
    for (const auto& [x, y] : leaf.buffer) {
      leaf.add_to_bins(x, y, cfg_.n_bins);
    }
    leaf.buffer.clear();
    leaf.buffer.shrink_to_fit();
    leaf.bins_frozen = true;
  }

  // Best variance-reduction split per feature, then best vs second-best
  // feature against the Hoeffding bound.
  struct Candidate {
    Real reduction = 0.0;
    Real threshold = 0.0;
    std::int64_t n_left = 0;
    Real sum_left = 0.0, sumsq_left = 0.0;
    std::int64_t n_right = 0;
    Real sum_right = 0.0, sumsq_right = 0.0;
  };
  std::string best_name;
  Candidate best;
  Real second_reduction = 0.0;
  for (const auto& [name, fb] : leaf.bins) {
    if (fb.bins.empty()) continue;
    std::int64_t n_total = 0;
    Real sum_total = 0.0, sumsq_total = 0.0;
    for (const BinStats& b : fb.bins) {
      n_total += b.n;
      sum_total += b.sum;
      sumsq_total += b.sumsq;
    }
    if (n_total < 2) continue;
    const Real total_sse = sse(n_total, sum_total, sumsq_total);
    Candidate feature_best;
    std::int64_t n_left = 0;
    Real sum_left = 0.0, sumsq_left = 0.0;
    const Real width = (fb.hi - fb.lo) / static_cast<Real>(cfg_.n_bins);
    for (int b = 0; b + 1 < cfg_.n_bins; ++b) {
      n_left += fb.bins[static_cast<std::size_t>(b)].n;
      sum_left += fb.bins[static_cast<std::size_t>(b)].sum;
      sumsq_left += fb.bins[static_cast<std::size_t>(b)].sumsq;
      const std::int64_t n_right = n_total - n_left;
      if (n_left == 0 || n_right == 0) continue;
      const Real child_sse = sse(n_left, sum_left, sumsq_left) +
                             sse(n_right, sum_total - sum_left, sumsq_total - sumsq_left);
      const Real reduction = (total_sse - child_sse) / static_cast<Real>(n_total);
      if (reduction > feature_best.reduction) {
        feature_best.reduction = reduction;
        feature_best.threshold = fb.lo + width * static_cast<Real>(b + 1);
        feature_best.n_left = n_left;
        feature_best.sum_left = sum_left;
        feature_best.sumsq_left = sumsq_left;
        feature_best.n_right = n_right;
        feature_best.sum_right = sum_total - sum_left;
        feature_best.sumsq_right = sumsq_total - sumsq_left;
      }
    }
    if (feature_best.reduction > best.reduction) {
      second_reduction = best.reduction;
      best = feature_best;
      best_name = name;
    } else if (feature_best.reduction > second_reduction) {
      second_reduction = feature_best.reduction;
    }
  }

  if (best.reduction <= 0.0) return;
  const Real range = target_max_ - target_min_;
  const Real epsilon = std::sqrt(range * range * std::log(1.0 / cfg_.split_confidence) /
                                 (2.0 * static_cast<Real>(leaf.count)));
  if (!(best.reduction - second_reduction > epsilon) && !(epsilon < cfg_.tie_threshold)) {
    return;
  }

  leaf.is_leaf = false;
  leaf.split_feature = best_name;
  leaf.threshold = best.threshold;
  leaf.left = std::make_unique<Node>();
  leaf.right = std::make_unique<Node>();
  leaf.left->depth = leaf.right->depth = leaf.depth + 1;
  // Seed children with the routed-side statistics so predictions stay the
  // leaf means of what flowed there.
  leaf.left->count = best.n_left;
  leaf.left->sum = best.sum_left;
  leaf.left->sumsq = best.sumsq_left;
  leaf.right->count = best.n_right;
  leaf.right->sum = best.sum_right;
  leaf.right->sumsq = best.sumsq_right;
  leaf.bins.clear();
  leaf.buffer.clear();
  ++splits_;
}

int HoeffdingTreeRegressor::depth() const {
  // iterative max depth over the tree
  int max_depth = 0;
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    max_depth = std::max(max_depth, n->depth);
    if (!n->is_leaf) {
      stack.push_back(n->left.get());
      stack.push_back(n->right.get());
    }
  }
  return max_depth;
}

std::optional<std::pair<std::string, Real>> HoeffdingTreeRegressor::root_split() const {
  if (root_->is_leaf) return std::nullopt;
  return std::make_pair(root_->split_feature, root_->threshold);
}

// Serialization walks the whole structure, buffers and bins included, so a
// suspended run resumes bit-identically.
struct HoeffdingNodeCodec {
  static json to_json(const HoeffdingTreeRegressor::Node& n) {
    json j;
    j["is_leaf"] = n.is_leaf;
    j["depth"] = n.depth;
    if (!n.is_leaf) {
      j["split_feature"] = n.split_feature;
      j["threshold"] = n.threshold;
      j["left"] = to_json(*n.left);
      j["right"] = to_json(*n.right);
      return j;
    }
    j["count"] = n.count;
    j["sum"] = n.sum;
    j["sumsq"] = n.sumsq;
    j["since_attempt"] = n.since_attempt;
    j["bins_frozen"] = n.bins_frozen;
    json buffer = json::array();
    for (const auto& [x, y] : n.buffer) buffer.push_back({{"x", x}, {"y", y}});
    j["buffer"] = std::move(buffer);
    json bins = json::object();
    for (const auto& [name, fb] : n.bins) {
      json arr = json::array();
      for (const BinStats& b : fb.bins) arr.push_back({{"n", b.n}, {"sum", b.sum}, {"sumsq", b.sumsq}});
      bins[name] = {{"lo", fb.lo}, {"hi", fb.hi}, {"bins", std::move(arr)}};
    }
    j["bins"] = std::move(bins);
    return j;
  }

  static std::unique_ptr<HoeffdingTreeRegressor::Node> from_json(const json& j) {
    auto n = std::make_unique<HoeffdingTreeRegressor::Node>();
    n->is_leaf = j.at("is_leaf").get<bool>();
    n->depth = j.at("depth").get<int>();
    if (!n->is_leaf) {
      n->split_feature = j.at("split_feature").get<std::string>();
      n->threshold = j.at("threshold").get<Real>();
      n->left = from_json(j.at("left"));
      n->right = from_json(j.at("right"));
      return n;
    }
    n->count = j.at("count").get<std::int64_t>();
    n->sum = j.at("sum").get<Real>();
    n->sumsq = j.at("sumsq").get<Real>();
    n->since_attempt = j.at("since_attempt").get<std::int64_t>();
    n->bins_frozen = j.at("bins_frozen").get<bool>();
    for (const auto& item : j.at("buffer")) {
      n->buffer.emplace_back(item.at("x").get<FeatureVector>(), item.at("y").get<Real>());
    }
    for (const auto& [name, fbj] : j.at("bins").items()) {
      HoeffdingTreeRegressor::Node::FeatureBins fb;
      fb.lo = fbj.at("lo").get<Real>();
      fb.hi = fbj.at("hi").get<Real>();
      for (const auto& bj : fbj.at("bins")) {
        fb.bins.push_back(BinStats{bj.at("n").get<std::int64_t>(), bj.at("sum").get<Real>(),
                                   bj.at("sumsq").get<Real>()});
      }
      n->bins.emplace(name, std::move(fb));
    }
    return n;
  }
};

json HoeffdingTreeRegressor::save_state() const {
  return {{"type", type()},
          {"grace", cfg_.grace_period},
          {"max_depth", cfg_.max_depth},
          {"delta", cfg_.split_confidence},
          {"tau", cfg_.tie_threshold},
          {"n_bins", cfg_.n_bins},
          {"splits", splits_},
          {"total", total_},
          {"global_mean", global_mean_},
          {"target_min", target_min_},
          {"target_max", target_max_},
          {"root", HoeffdingNodeCodec::to_json(*root_)}};
}

void HoeffdingTreeRegressor::load_state(const json& state) {
  cfg_.grace_period = state.at("grace").get<int>();
  cfg_.max_depth = state.at("max_depth").get<int>();
  cfg_.split_confidence = state.at("delta").get<Real>();
  cfg_.tie_threshold = state.at("tau").get<Real>();
  cfg_.n_bins = state.at("n_bins").get<int>();
  splits_ = state.at("splits").get<std::int64_t>();
  total_ = state.at("total").get<std::int64_t>();
  global_mean_ = state.at("global_mean").get<Real>();
  target_min_ = state.at("target_min").get<Real>();
  target_max_ = state.at("target_max").get<Real>();
  root_ = HoeffdingNodeCodec::from_json(state.at("root"));
}

}  // namespace driftsel
