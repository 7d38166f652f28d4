#include "driftsel/learners.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <random>

namespace driftsel {

using nlohmann::json;

namespace {

void check_observation(const FeatureVector& x, Real y) {
  require_finite(x);
  require_finite(y, "target");
}

// Parameters must stay far enough from the double range that pairwise
// products cannot overflow into inf - inf = NaN during prediction.
bool representable(Real v) { return std::isfinite(v) && std::abs(v) < 1e100; }

}  // namespace

// --- LinearSgdRegressor ------------------------------------------------------

Real LinearSgdRegressor::predict(const FeatureVector& x) const {
  Real yhat = intercept_;
  for (const auto& [name, value] : x) {
    auto it = weights_.find(name);
    if (it != weights_.end()) yhat += it->second * value;
  }
  return yhat;
}

void LinearSgdRegressor::learn(const FeatureVector& x, Real y) {
  check_observation(x, y);
  const Real err = predict(x) - y;  // d(1/2 (yhat-y)^2) / d yhat
  // Stage the update, then commit only if every weight stays finite.
  std::vector<std::pair<std::string, Real>> staged;
  staged.reserve(x.size() + 1);
  bool ok = true;
  for (const auto& [name, value] : x) {
    const Real w = weight(name) - eta_ * err * value;
    ok &= representable(w);
    staged.emplace_back(name, w);
  }
  const Real b = intercept_ - eta_ * err;
  ok &= representable(b);
  if (!ok) throw NumericError("linear sgd: update would break the finite-weights invariant");
  for (auto& [name, w] : staged) weights_[name] = w;
  intercept_ = b;
}

Real LinearSgdRegressor::weight(const std::string& name) const {
  auto it = weights_.find(name);
  return it == weights_.end() ? 0.0 : it->second;
}

json LinearSgdRegressor::save_state() const {
  return {{"type", type()}, {"eta", eta_}, {"intercept", intercept_}, {"w", weights_}};
}

void LinearSgdRegressor::load_state(const json& state) {
  eta_ = state.at("eta").get<Real>();
  intercept_ = state.at("intercept").get<Real>();
  weights_ = state.at("w").get<std::map<std::string, Real>>();
}

// --- FmRegressor --------------------------------------------------------------

FmRegressor::FmRegressor(int n_factors, Real learning_rate, Real init_scale, std::uint64_t seed)
    : k_(n_factors), eta_(learning_rate), init_scale_(init_scale), seed_(seed) {
  if (k_ < 1) throw ConfigError("fm: n_factors must be >= 1");
}

Vector FmRegressor::latent_for(const std::string& name) const {
  auto it = latents_.find(name);
  if (it != latents_.end()) return it->second;
  std::mt19937_64 rng(substream_seed(seed_, name));
  std::normal_distribution<Real> dist(0.0, init_scale_);
  Vector v(k_);
  for (int f = 0; f < k_; ++f) v[f] = dist(rng);
  return v;
}

Real FmRegressor::predict(const FeatureVector& x) const {
  Real yhat = w0_;
  Vector factor_sums = Vector::Zero(k_);
  Vector factor_sq_sums = Vector::Zero(k_);
  for (const auto& [name, value] : x) {
    if (auto it = w_.find(name); it != w_.end()) yhat += it->second * value;
    const Vector v = latent_for(name);
    factor_sums += v * value;
    factor_sq_sums += v.cwiseProduct(v) * (value * value);
  }
  // sum_{j<l} <v_j, v_l> x_j x_l = 1/2 sum_f [(sum_j v_jf x_j)^2 - sum_j v_jf^2 x_j^2]
  yhat += 0.5 * (factor_sums.squaredNorm() - factor_sq_sums.sum());
  return yhat;
}

Real FmRegressor::predict_naive(const FeatureVector& x) const {
  Real yhat = w0_;
  std::vector<std::pair<std::string, Real>> items(x.begin(), x.end());
  for (const auto& [name, value] : items) {
    if (auto it = w_.find(name); it != w_.end()) yhat += it->second * value;
  }
  for (std::size_t j = 0; j < items.size(); ++j) {
    for (std::size_t l = j + 1; l < items.size(); ++l) {
      yhat += latent_for(items[j].first).dot(latent_for(items[l].first)) * items[j].second *
              items[l].second;
    }
  }
  return yhat;
}

void FmRegressor::learn(const FeatureVector& x, Real y) {
  check_observation(x, y);
  // Materialize latents before updating so the deterministic init applies.
  Vector factor_sums = Vector::Zero(k_);
  for (const auto& [name, value] : x) {
    auto it = latents_.find(name);
    if (it == latents_.end()) it = latents_.emplace(name, latent_for(name)).first;
    factor_sums += it->second * value;
  }
  const Real err = predict(x) - y;
  // Stage the update, then commit only if everything stays finite.
  const Real new_w0 = w0_ - eta_ * err;
  bool ok = representable(new_w0);
  std::vector<std::pair<std::string, std::pair<Real, Vector>>> staged;
  staged.reserve(x.size());
  for (const auto& [name, value] : x) {
    auto wit = w_.find(name);
    const Real w = (wit == w_.end() ? 0.0 : wit->second) - eta_ * err * value;
    const Vector& v = latents_.at(name);
    // d yhat / d v_jf = x_j (sum_l v_lf x_l - v_jf x_j)
    Vector updated = v - eta_ * err * (value * (factor_sums - v * value));
    ok &= representable(w) && updated.allFinite() &&
          updated.cwiseAbs().maxCoeff() < 1e100;
    staged.emplace_back(name, std::make_pair(w, std::move(updated)));
  }
  if (!ok) throw NumericError("fm: update would break the finite-parameters invariant");
  w0_ = new_w0;
  for (auto& [name, wv] : staged) {
    w_[name] = wv.first;
    latents_[name] = std::move(wv.second);
  }
}

json FmRegressor::loss_gradient(const FeatureVector& x, Real y) const {
  Vector factor_sums = Vector::Zero(k_);
  for (const auto& [name, value] : x) factor_sums += latent_for(name) * value;
  const Real err = predict(x) - y;
  json w_grad = json::object();
  json v_grad = json::object();
  for (const auto& [name, value] : x) {
    w_grad[name] = err * value;
    const Vector v = latent_for(name);
    Vector grad = err * value * (factor_sums - v * value);
    v_grad[name] = std::vector<Real>(grad.data(), grad.data() + grad.size());
  }
  return {{"w0", err}, {"w", w_grad}, {"V", v_grad}};
}

json FmRegressor::save_state() const {
  json latents = json::object();
  for (const auto& [name, v] : latents_) {
    latents[name] = std::vector<Real>(v.data(), v.data() + v.size());
  }
  return {{"type", type()}, {"k", k_},           {"eta", eta_}, {"init_scale", init_scale_},
          {"seed", seed_},  {"w0", w0_},         {"w", w_},     {"V", latents}};
}

void FmRegressor::load_state(const json& state) {
  k_ = state.at("k").get<int>();
  eta_ = state.at("eta").get<Real>();
  init_scale_ = state.at("init_scale").get<Real>();
  seed_ = state.at("seed").get<std::uint64_t>();
  w0_ = state.at("w0").get<Real>();
  w_ = state.at("w").get<std::map<std::string, Real>>();
  latents_.clear();
  for (const auto& [name, arr] : state.at("V").items()) {
    auto vals = arr.get<std::vector<Real>>();
    latents_[name] = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
}

// --- BatchLinearRegressor ------------------------------------------------------

BatchLinearRegressor::BatchLinearRegressor(std::vector<std::string> input_names, Real ridge)
    : index_(std::move(input_names)), ridge_(ridge) {
  weights_ = Vector::Zero(static_cast<Eigen::Index>(index_.dimension()));
}

void BatchLinearRegressor::fit(const std::vector<std::pair<FeatureVector, Real>>& samples) {
  if (samples.size() < 2) {
    throw ValidationError("batch fit: needs at least 2 samples");
  }
  const Eigen::Index p = static_cast<Eigen::Index>(index_.dimension()) + 1;  // + intercept
  Matrix gram = Matrix::Zero(p, p);
  Vector moment = Vector::Zero(p);
  Vector row(p);
  for (const auto& [x, y] : samples) {
    require_finite(x);
    require_finite(y, "target");
    row.head(p - 1) = index_.project(x);
    row[p - 1] = 1.0;
    gram.noalias() += row * row.transpose();
    moment.noalias() += row * y;
  }
  gram.diagonal().array() += ridge_;
  Eigen::LDLT<Matrix> solver(gram);
  if (solver.info() != Eigen::Success) {
    throw NumericError("batch fit: normal equations not solvable");
  }
  Vector solution = solver.solve(moment);
  if (!solution.allFinite()) {
    throw NumericError("batch fit: singular system");
  }
  weights_ = solution.head(p - 1);
  intercept_ = solution[p - 1];
  fitted_ = true;
}

Real BatchLinearRegressor::predict(const FeatureVector& x) const {
  return weights_.dot(index_.project(x)) + intercept_;
}

void BatchLinearRegressor::learn(const FeatureVector&, Real) {
  // frozen comparator: deliberately a no-op
}

json BatchLinearRegressor::save_state() const {
  return {{"type", type()},
          {"names", index_.names()},
          {"ridge", ridge_},
          {"weights", std::vector<Real>(weights_.data(), weights_.data() + weights_.size())},
          {"intercept", intercept_},
          {"fitted", fitted_}};
}

void BatchLinearRegressor::load_state(const json& state) {
  index_ = FeatureIndexMap(state.at("names").get<std::vector<std::string>>());
  ridge_ = state.at("ridge").get<Real>();
  auto w = state.at("weights").get<std::vector<Real>>();
  weights_ = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  intercept_ = state.at("intercept").get<Real>();
  fitted_ = state.at("fitted").get<bool>();
}

}  // namespace driftsel
