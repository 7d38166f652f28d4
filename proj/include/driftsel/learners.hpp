#pragma once

#include "driftsel/features.hpp"
#include "driftsel/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace driftsel {

/// The uniform anytime predict-one / learn-one contract. predict never
/// mutates state; learn processes exactly one observation; both are total
/// for any finite FeatureVector, including never-seen feature names.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual Real predict(const FeatureVector& x) const = 0;
  virtual void learn(const FeatureVector& x, Real y) = 0;

  virtual std::string type() const = 0;
  virtual nlohmann::json save_state() const = 0;
  virtual void load_state(const nlohmann::json& state) = 0;

  /// Feature names dropped because they fall outside a frozen index map.
  virtual std::int64_t ignored_feature_count() const { return 0; }
  /// Predictive variance, for learners that model one.
  virtual std::optional<Real> predictive_variance(const FeatureVector&) const {
    return std::nullopt;
  }
};

// --- Linear regression trained with SGD ------------------------------------

class LinearSgdRegressor final : public Regressor {
 public:
  explicit LinearSgdRegressor(Real learning_rate = 0.1) : eta_(learning_rate) {}

  Real predict(const FeatureVector& x) const override;
  void learn(const FeatureVector& x, Real y) override;

  std::string type() const override { return "linear"; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  Real weight(const std::string& name) const;
  Real intercept() const { return intercept_; }

 private:
  std::map<std::string, Real> weights_;
  Real intercept_ = 0.0;
  Real eta_;
};

// --- Factorization machine --------------------------------------------------

/// Degree-2 FM. Latent vectors are drawn deterministically from (seed, name),
/// so a feature's latents are identical whether first touched by predict or
/// by learn; predict stays pure.
class FmRegressor final : public Regressor {
 public:
  FmRegressor(int n_factors = 10, Real learning_rate = 0.1, Real init_scale = 0.01,
              std::uint64_t seed = 1);

  Real predict(const FeatureVector& x) const override;
  void learn(const FeatureVector& x, Real y) override;

  std::string type() const override { return "fm"; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  /// The pairwise sum by the naive O(p^2) double loop; oracle counterpart
  /// of predict.
  Real predict_naive(const FeatureVector& x) const;

  /// d loss / d parameter at (x, y), mirroring save_state's layout
  /// ({"w0": g, "w": {...}, "V": {...}}) for finite-difference checks.
  nlohmann::json loss_gradient(const FeatureVector& x, Real y) const;

  Vector latent_for(const std::string& name) const;
  int n_factors() const { return k_; }

 private:
  int k_;
  Real eta_;
  Real init_scale_;
  std::uint64_t seed_;
  Real w0_ = 0.0;
  std::map<std::string, Real> w_;
  std::map<std::string, Vector> latents_;
};

// --- Feed-forward network (ReLU hiddens, Adam) ------------------------------

struct MlpConfig {
  std::vector<int> hidden_sizes = {30, 30};
  Real learning_rate = 0.01;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
  std::uint64_t seed = 1;
  bool standardize_inputs = true;
};

class MlpRegressor final : public Regressor {
 public:
  MlpRegressor(std::vector<std::string> input_names, MlpConfig config = {});

  Real predict(const FeatureVector& x) const override;
  void learn(const FeatureVector& x, Real y) override;

  std::string type() const override { return "mlp"; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;
  std::int64_t ignored_feature_count() const override { return index_.ignored_count(); }

  /// d loss / d parameter at (x, y) as {"W": [...], "b": [...]}, matching
  /// save_state's layout for finite-difference checks.
  nlohmann::json loss_gradient(const FeatureVector& x, Real y) const;

  std::int64_t steps() const { return t_; }

 private:
  Vector preprocess(const FeatureVector& x) const;
  Real forward(const Vector& input, std::vector<Vector>* activations,
               std::vector<Vector>* preacts) const;

  FeatureIndexMap index_;
  MlpConfig cfg_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::vector<Matrix> adam_m_w_, adam_v_w_;
  std::vector<Vector> adam_m_b_, adam_v_b_;
  std::int64_t t_ = 0;
  RunningScaler scaler_;
};

// --- Hoeffding tree (regression) --------------------------------------------

struct HoeffdingConfig {
  int grace_period = 200;
  int max_depth = 5;
  Real split_confidence = 1e-5;  // delta
  Real tie_threshold = 0.05;     // tau
  int n_bins = 16;
};

class HoeffdingTreeRegressor final : public Regressor {
 public:
  explicit HoeffdingTreeRegressor(HoeffdingConfig config = {});
  ~HoeffdingTreeRegressor() override;
  HoeffdingTreeRegressor(HoeffdingTreeRegressor&&) noexcept;
  HoeffdingTreeRegressor& operator=(HoeffdingTreeRegressor&&) noexcept;

  Real predict(const FeatureVector& x) const override;
  void learn(const FeatureVector& x, Real y) override;

  std::string type() const override { return "hoeffding_tree"; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  int depth() const;
  std::int64_t split_count() const { return splits_; }
  /// (feature, threshold) of the root split, if the root has split.
  std::optional<std::pair<std::string, Real>> root_split() const;

 private:
  struct Node;
  friend struct HoeffdingNodeCodec;
  HoeffdingConfig cfg_;
  std::unique_ptr<Node> root_;
  std::int64_t splits_ = 0;
  std::int64_t total_ = 0;
  Real global_mean_ = 0.0;
  Real target_min_ = 0.0;
  Real target_max_ = 0.0;

  void try_split(Node& leaf);
};

// --- Bayesian linear regression (standard + drift-resilient) ----------------

struct BayesConfig {
  Real alpha = 1.0;  // prior precision; S_0 = alpha^-1 I
  Real beta = 1.0;   // noise precision
  Real gamma = 0.7;  // smoothing for the drift update
  bool drift = true; // false selects the standard conjugate update
  // Standardize FeatureVector inputs (the learn/predict wrapper only; the
  // direct vector API below is untouched). Keeps every dimension active, so
  // the gamma-discounted precision cannot decay to singularity on dims whose
  // raw value sits at zero for long stretches.
  bool standardize_inputs = true;
};

class BayesianLinearRegressor final : public Regressor {
 public:
  BayesianLinearRegressor(std::vector<std::string> input_names, BayesConfig config = {});

  Real predict(const FeatureVector& x) const override;
  void learn(const FeatureVector& x, Real y) override;

  std::string type() const override { return "bayes_linear"; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;
  std::int64_t ignored_feature_count() const override { return index_.ignored_count(); }
  std::optional<Real> predictive_variance(const FeatureVector& x) const override;

  /// Exact conjugate posterior update (Sherman-Morrison on the covariance).
  void learn_standard(const Vector& x, Real y);
  /// Gamma-smoothed drift-resilient update.
  void learn_drift(const Vector& x, Real y);

  std::pair<Real, Real> predictive(const Vector& x) const;
  /// Projection + (when configured) standardization, as used by learn/predict.
  Vector preprocess(const FeatureVector& x) const;

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return cov_; }
  const Matrix& precision() const { return precision_; }
  std::int64_t resymmetrize_count() const { return resym_; }

 private:
  void enforce_symmetry();

  FeatureIndexMap index_;
  BayesConfig cfg_;
  Vector mean_;
  Matrix cov_;
  Matrix precision_;
  RunningScaler scaler_;
  std::int64_t resym_ = 0;
};

// --- Frozen batch comparator -------------------------------------------------

/// Linear regression fit once by ridge-regularized normal equations on a
/// warm-up sample, frozen thereafter; learn() is a no-op by contract.
class BatchLinearRegressor final : public Regressor {
 public:
  BatchLinearRegressor(std::vector<std::string> input_names, Real ridge = 1e-6);

  void fit(const std::vector<std::pair<FeatureVector, Real>>& samples);
  bool fitted() const { return fitted_; }

  Real predict(const FeatureVector& x) const override;
  void learn(const FeatureVector& x, Real y) override;  // no-op

  std::string type() const override { return "batch_linear"; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;
  std::int64_t ignored_feature_count() const override { return index_.ignored_count(); }

  const Vector& weights() const { return weights_; }
  Real intercept() const { return intercept_; }

 private:
  FeatureIndexMap index_;
  Real ridge_;
  Vector weights_;
  Real intercept_ = 0.0;
  bool fitted_ = false;
};

/// Builds a learner from its JSON config ({"type": "linear", ...}). The
/// fixed-dimension learners are wired to the fixed feature schema.
std::unique_ptr<Regressor> make_regressor(const nlohmann::json& config, std::uint64_t seed);

}  // namespace driftsel
