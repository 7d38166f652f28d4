#include "driftsel/learners.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <cmath>

namespace driftsel {

using nlohmann::json;

BayesianLinearRegressor::BayesianLinearRegressor(std::vector<std::string> input_names,
                                                 BayesConfig config)
    : index_(std::move(input_names)), cfg_(config) {
  if (!(cfg_.alpha > 0.0) || !(cfg_.beta > 0.0)) {
    throw ConfigError("bayes: alpha and beta must be > 0");
  }
  if (cfg_.gamma < 0.0 || cfg_.gamma > 1.0) {
    throw ConfigError("bayes: gamma must lie in [0, 1]");
  }
  const Eigen::Index p = static_cast<Eigen::Index>(index_.dimension());
  mean_ = Vector::Zero(p);
  cov_ = Matrix::Identity(p, p) / cfg_.alpha;
  precision_ = Matrix::Identity(p, p) * cfg_.alpha;
  scaler_ = RunningScaler(index_.dimension());
}

Vector BayesianLinearRegressor::preprocess(const FeatureVector& x) const {
  Vector v = index_.project(x);
  return cfg_.standardize_inputs ? scaler_.transform(v) : v;
}

void BayesianLinearRegressor::enforce_symmetry() {
  // Numerical guard. Loss of symmetry or positive definiteness is repaired by
  // re-symmetrizing and flooring the spectrum; the variance cap bounds the
  // 1/gamma^t growth of the covariance along directions the inputs never
  // excite (exactly collinear features make such directions persist). Both
  // repairs keep precision = covariance^-1 consistent and are counted.
  const Real cap = 1e4 / cfg_.alpha;
  const Real max_abs = cov_.cwiseAbs().maxCoeff();
  const Real asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
  bool bad = asym > 1e-9 * (1.0 + max_abs) || max_abs > cap || !cov_.allFinite();
  for (Eigen::Index i = 0; i < cov_.rows() && !bad; ++i) {
    if (!(cov_(i, i) > 0.0)) bad = true;
  }
  if (!bad) return;
  Matrix sym = (cov_ + cov_.transpose()) / 2.0;
  if (!sym.allFinite()) {
    throw NumericError("bayes: covariance left the representable range");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericError("bayes: covariance eigendecomposition failed");
  }
  Vector lambda = eig.eigenvalues().cwiseMax(cap * 1e-16).cwiseMin(cap);
  // A direction whose variance hit the cap has had all its evidence
  // discounted away; the posterior mean there reverts to the prior's (zero),
  // instead of carrying stale weight into rarely seen feature directions.
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (eig.eigenvalues()[i] > cap) {
      const Vector v = eig.eigenvectors().col(i);
      mean_ -= v * v.dot(mean_);
    }
  }
  cov_ = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  precision_ =
      eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  ++resym_;
}

void BayesianLinearRegressor::learn_standard(const Vector& x, Real y) {
  if (!x.allFinite()) throw NumericError("bayes: non-finite input");
  require_finite(y, "target");
  if (x.isZero(0.0)) return;  // no information

  // S_{t+1} = (S_t^-1 + beta x x^T)^-1 via Sherman-Morrison on S_t.
  const Vector sx = cov_ * x;
  const Real denom = 1.0 + cfg_.beta * x.dot(sx);
  Matrix new_cov = cov_ - (cfg_.beta / denom) * (sx * sx.transpose());
  // m_{t+1} = S_{t+1} (S_t^-1 m_t + beta x y)
  Vector rhs = precision_ * mean_ + cfg_.beta * y * x;
  mean_ = new_cov * rhs;
  cov_ = std::move(new_cov);
  precision_ += cfg_.beta * (x * x.transpose());
  enforce_symmetry();
}

void BayesianLinearRegressor::learn_drift(const Vector& x, Real y) {
  if (!x.allFinite()) throw NumericError("bayes: non-finite input");
  require_finite(y, "target");
  const Real g = cfg_.gamma;
  if (g == 1.0) return;  // sticks to the prior, state bit-unchanged

  const Real c = (1.0 - g) * cfg_.beta;
  Vector rhs = g * (precision_ * mean_) + c * y * x;
  if (g == 0.0) {
    // P_{t+1} = beta x x^T is rank-1; only invertible in one dimension.
    if (mean_.size() != 1 || x.isZero(0.0)) {
      throw NumericError("bayes drift: gamma = 0 yields a singular precision");
    }
    precision_ = c * (x * x.transpose());
    cov_ = precision_.inverse();
    mean_ = cov_ * rhs;
    enforce_symmetry();
    return;
  }
  // Sherman-Morrison on the gamma-scaled inverse: (gamma P)^-1 = S / gamma.
  Matrix scaled = cov_ / g;
  const Vector sx = scaled * x;
  const Real denom = 1.0 + c * x.dot(sx);
  cov_ = scaled - (c / denom) * (sx * sx.transpose());
  precision_ = g * precision_ + c * (x * x.transpose());
  mean_ = cov_ * rhs;
  enforce_symmetry();
}

std::pair<Real, Real> BayesianLinearRegressor::predictive(const Vector& x) const {
  const Real mu = mean_.dot(x);
  const Real var = 1.0 / cfg_.beta + x.dot(cov_ * x);
  return {mu, var};
}

Real BayesianLinearRegressor::predict(const FeatureVector& x) const {
  return predictive(preprocess(x)).first;
}

std::optional<Real> BayesianLinearRegressor::predictive_variance(const FeatureVector& x) const {
  return predictive(preprocess(x)).second;
}

void BayesianLinearRegressor::learn(const FeatureVector& x, Real y) {
  require_finite(x);
  require_finite(y, "target");
  Vector v = index_.project(x);
  if (cfg_.standardize_inputs) {
    scaler_.update(v);
    v = scaler_.transform(v);
  }
  if (cfg_.drift) {
    learn_drift(v, y);
  } else {
    learn_standard(v, y);
  }
}

json BayesianLinearRegressor::save_state() const {
  json cov = json::array();
  json prec = json::array();
  for (Eigen::Index r = 0; r < cov_.rows(); ++r) {
    json crow = json::array();
    json prow = json::array();
    for (Eigen::Index c = 0; c < cov_.cols(); ++c) {
      crow.push_back(cov_(r, c));
      prow.push_back(precision_(r, c));
    }
    cov.push_back(std::move(crow));
    prec.push_back(std::move(prow));
  }
  return {{"type", type()},
          {"names", index_.names()},
          {"alpha", cfg_.alpha},
          {"beta", cfg_.beta},
          {"gamma", cfg_.gamma},
          {"drift", cfg_.drift},
          {"standardize", cfg_.standardize_inputs},
          {"mean", std::vector<Real>(mean_.data(), mean_.data() + mean_.size())},
          {"cov", cov},
          {"precision", prec},
          {"scaler", scaler_.save_state()},
          {"resym", resym_}};
}

void BayesianLinearRegressor::load_state(const json& state) {
  BayesConfig cfg;
  cfg.alpha = state.at("alpha").get<Real>();
  cfg.beta = state.at("beta").get<Real>();
  cfg.gamma = state.at("gamma").get<Real>();
  cfg.drift = state.at("drift").get<bool>();
  cfg.standardize_inputs = state.at("standardize").get<bool>();
  *this = BayesianLinearRegressor(state.at("names").get<std::vector<std::string>>(), cfg);
  auto m = state.at("mean").get<std::vector<Real>>();
  mean_ = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  const json& cov = state.at("cov");
  const json& prec = state.at("precision");
  for (Eigen::Index r = 0; r < mean_.size(); ++r) {
    for (Eigen::Index c = 0; c < mean_.size(); ++c) {
      cov_(r, c) = cov[r][c].get<Real>();
      precision_(r, c) = prec[r][c].get<Real>();
    }
  }
  scaler_ = RunningScaler::from_state(state.at("scaler"));
  resym_ = state.at("resym").get<std::int64_t>();
}

}  // namespace driftsel
