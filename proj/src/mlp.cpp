#include "driftsel/learners.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

namespace driftsel {

using nlohmann::json;

namespace {

std::vector<Real> to_flat(const Matrix& m) {
  return std::vector<Real>(m.data(), m.data() + m.size());
}

Matrix from_flat(const std::vector<Real>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<Real>();
  }
  return m;
}

}  // namespace

MlpRegressor::MlpRegressor(std::vector<std::string> input_names, MlpConfig config)
    : index_(std::move(input_names)), cfg_(std::move(config)) {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(index_.dimension()));
  for (int h : cfg_.hidden_sizes) sizes.push_back(h);
  sizes.push_back(1);

  std::mt19937_64 rng(substream_seed(cfg_.seed, "mlp-init"));
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    std::normal_distribution<Real> dist(0.0, std::sqrt(2.0 / std::max(fan_in, 1)));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    weights_.push_back(std::move(w));
    std::normal_distribution<Real> bias_dist(0.0, 0.1);
    Vector b(fan_out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bias_dist(rng);
    biases_.push_back(std::move(b));
    adam_m_w_.push_back(Matrix::Zero(fan_out, fan_in));
    adam_v_w_.push_back(Matrix::Zero(fan_out, fan_in));
    adam_m_b_.push_back(Vector::Zero(fan_out));
    adam_v_b_.push_back(Vector::Zero(fan_out));
  }
  scaler_ = RunningScaler(index_.dimension());
}

Vector MlpRegressor::preprocess(const FeatureVector& x) const {
  Vector v = index_.project(x);
  return cfg_.standardize_inputs ? scaler_.transform(v) : v;
}

Real MlpRegressor::forward(const Vector& input, std::vector<Vector>* activations,
                           std::vector<Vector>* preacts) const {
  Vector a = input;
  if (activations) activations->push_back(a);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Vector z = weights_[l] * a + biases_[l];
    if (preacts) preacts->push_back(z);
    if (l + 1 < weights_.size()) {
      a = z.cwiseMax(0.0);  // ReLU hiddens, identity output
    } else {
      a = z;
    }
    if (activations) activations->push_back(a);
  }
  return a[0];
}

Real MlpRegressor::predict(const FeatureVector& x) const {
  return forward(preprocess(x), nullptr, nullptr);
}

void MlpRegressor::learn(const FeatureVector& x, Real y) {
  require_finite(x);
  require_finite(y, "target");

  if (cfg_.standardize_inputs) scaler_.update(index_.project(x));
  const Vector input = preprocess(x);

  std::vector<Vector> activations;
  std::vector<Vector> preacts;
  const Real yhat = forward(input, &activations, &preacts);

  // Backward pass for loss = 1/2 (yhat - y)^2.
  Vector delta(1);
  delta[0] = yhat - y;
  std::vector<Matrix> grad_w(weights_.size());
  std::vector<Vector> grad_b(weights_.size());
  for (std::size_t l = weights_.size(); l-- > 0;) {
    grad_w[l] = delta * activations[l].transpose();
    grad_b[l] = delta;
    if (l > 0) {
      Vector back = weights_[l].transpose() * delta;
      delta = back.cwiseProduct(
          (preacts[l - 1].array() > 0.0).cast<Real>().matrix());
    }
  }

  ++t_;
  const Real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Real>(t_));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    adam_m_w_[l] = cfg_.beta1 * adam_m_w_[l] + (1.0 - cfg_.beta1) * grad_w[l];
    adam_v_w_[l] = cfg_.beta2 * adam_v_w_[l] + (1.0 - cfg_.beta2) * grad_w[l].cwiseProduct(grad_w[l]);
    weights_[l].array() -= cfg_.learning_rate * (adam_m_w_[l].array() / bc1) /
                           ((adam_v_w_[l].array() / bc2).sqrt() + cfg_.epsilon);
    adam_m_b_[l] = cfg_.beta1 * adam_m_b_[l] + (1.0 - cfg_.beta1) * grad_b[l];
    adam_v_b_[l] = cfg_.beta2 * adam_v_b_[l] + (1.0 - cfg_.beta2) * grad_b[l].cwiseProduct(grad_b[l]);
    biases_[l].array() -= cfg_.learning_rate * (adam_m_b_[l].array() / bc1) /
                          ((adam_v_b_[l].array() / bc2).sqrt() + cfg_.epsilon);
  }
}

json MlpRegressor::loss_gradient(const FeatureVector& x, Real y) const {
  const Vector input = preprocess(x);
  std::vector<Vector> activations;
  std::vector<Vector> preacts;
  const Real yhat = forward(input, &activations, &preacts);

  Vector delta(1);
  delta[0] = yhat - y;
  std::vector<json> grad_w(weights_.size());
  std::vector<json> grad_b(weights_.size());
  for (std::size_t l = weights_.size(); l-- > 0;) {
    Matrix gw = delta * activations[l].transpose();
    Vector gb = delta;
    grad_w[l] = matrix_to_json(gw);
    grad_b[l] = std::vector<Real>(gb.data(), gb.data() + gb.size());
    if (l > 0) {
      Vector back = weights_[l].transpose() * delta;
      delta = back.cwiseProduct((preacts[l - 1].array() > 0.0).cast<Real>().matrix());
    }
  }
  return {{"W", grad_w}, {"b", grad_b}};
}

json MlpRegressor::save_state() const {
  json w = json::array();
  json b = json::array();
  json mw = json::array();
  json vw = json::array();
  json mb = json::array();
  json vb = json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    w.push_back(matrix_to_json(weights_[l]));
    b.push_back(std::vector<Real>(biases_[l].data(), biases_[l].data() + biases_[l].size()));
    mw.push_back(to_flat(adam_m_w_[l]));
    vw.push_back(to_flat(adam_v_w_[l]));
    mb.push_back(std::vector<Real>(adam_m_b_[l].data(), adam_m_b_[l].data() + adam_m_b_[l].size()));
    vb.push_back(std::vector<Real>(adam_v_b_[l].data(), adam_v_b_[l].data() + adam_v_b_[l].size()));
  }
  return {{"type", type()},
          {"names", index_.names()},
          {"hidden", cfg_.hidden_sizes},
          {"eta", cfg_.learning_rate},
          {"beta1", cfg_.beta1},
          {"beta2", cfg_.beta2},
          {"epsilon", cfg_.epsilon},
          {"seed", cfg_.seed},
          {"standardize", cfg_.standardize_inputs},
          {"W", w},
          {"b", b},
          {"adam_m_w", mw},
          {"adam_v_w", vw},
          {"adam_m_b", mb},
          {"adam_v_b", vb},
          {"t", t_},
          {"scaler", scaler_.save_state()}};
}

void MlpRegressor::load_state(const json& state) {
  MlpConfig cfg;
  cfg.hidden_sizes = state.at("hidden").get<std::vector<int>>();
  cfg.learning_rate = state.at("eta").get<Real>();
  cfg.beta1 = state.at("beta1").get<Real>();
  cfg.beta2 = state.at("beta2").get<Real>();
  cfg.epsilon = state.at("epsilon").get<Real>();
  cfg.seed = state.at("seed").get<std::uint64_t>();
  cfg.standardize_inputs = state.at("standardize").get<bool>();
  *this = MlpRegressor(state.at("names").get<std::vector<std::string>>(), cfg);

  const json& w = state.at("W");
  const json& b = state.at("b");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l] = matrix_from_json(w[l]);
    auto bias = b[l].get<std::vector<Real>>();
    biases_[l] = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    adam_m_w_[l] = from_flat(state.at("adam_m_w")[l].get<std::vector<Real>>(), weights_[l].rows(),
                             weights_[l].cols());
    adam_v_w_[l] = from_flat(state.at("adam_v_w")[l].get<std::vector<Real>>(), weights_[l].rows(),
                             weights_[l].cols());
    auto mb = state.at("adam_m_b")[l].get<std::vector<Real>>();
    auto vb = state.at("adam_v_b")[l].get<std::vector<Real>>();
    adam_m_b_[l] = Eigen::Map<const Vector>(mb.data(), static_cast<Eigen::Index>(mb.size()));
    adam_v_b_[l] = Eigen::Map<const Vector>(vb.data(), static_cast<Eigen::Index>(vb.size()));
  }
  t_ = state.at("t").get<std::int64_t>();
  scaler_ = RunningScaler::from_state(state.at("scaler"));
}

}  // namespace driftsel
