#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "driftsel/learners.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <random>

using namespace driftsel;
using nlohmann::json;

namespace {

std::vector<std::string> names(int p) {
  std::vector<std::string> out;
  for (int i = 0; i < p; ++i) out.push_back("x" + std::to_string(i));
  return out;
}

MlpConfig small_config(std::uint64_t seed, std::vector<int> hidden = {2, 2}) {
  MlpConfig cfg;
  cfg.hidden_sizes = std::move(hidden);
  cfg.seed = seed;
  cfg.standardize_inputs = false;
  return cfg;
}

Real gradcheck_worst(MlpRegressor& model, const FeatureVector& x, Real y, Real h = 1e-5) {
  json state = model.save_state();
  json grad = model.loss_gradient(x, y);
  Real worst = 0.0;

  auto loss_at = [&](const json& s) {
    model.load_state(s);
    Real e = model.predict(x) - y;
    return 0.5 * e * e;
  };

  std::function<void(json&, const json&)> walk = [&](json& node, const json& gnode) {
    if (node.is_number()) {
      const Real analytic = gnode.get<Real>();
      const Real orig = node.get<Real>();
      node = orig + h;
      Real up = loss_at(state);
      node = orig - h;
      Real down = loss_at(state);
      node = orig;
      const Real fd = (up - down) / (2.0 * h);
      const Real denom = std::max({std::abs(analytic), std::abs(fd), 1.0});
      worst = std::max(worst, std::abs(analytic - fd) / denom);
      return;
    }
    if (node.is_array()) {
      for (std::size_t i = 0; i < node.size(); ++i) walk(node[i], gnode[i]);
    }
  };

  walk(state.at("W"), grad.at("W"));
  walk(state.at("b"), grad.at("b"));
  model.load_state(state);
  return worst;
}

}  // namespace

TEST_CASE("all-zero parameters predict 0 for any input") {
  MlpRegressor model(names(3), small_config(1, {4, 4}));
  json state = model.save_state();
  for (auto& layer : state["W"]) {
    for (auto& row : layer) {
      for (auto& v : row) v = 0.0;
    }
  }
  for (auto& layer : state["b"]) {
    for (auto& v : layer) v = 0.0;
  }
  model.load_state(state);
  CHECK(model.predict({{"x0", 1.0}, {"x1", -2.0}, {"x2", 0.5}}) == 0.0);
  CHECK(model.predict({}) == 0.0);
}

TEST_CASE("mlp analytic gradient matches central finite differences") {
  // 4-2-2-1 network per the stated oracle shape
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<Real> uv(-1.0, 1.0);
  Real worst = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    MlpRegressor model(names(4), small_config(rng(), {2, 2}));
    FeatureVector x;
    for (int j = 0; j < 4; ++j) x["x" + std::to_string(j)] = uv(rng);
    worst = std::max(worst, gradcheck_worst(model, x, uv(rng)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("mlp overfits a single repeated observation") {
  MlpConfig cfg;
  cfg.seed = 9;
  cfg.standardize_inputs = false;  // a single point has no variance to scale by
  MlpRegressor model(names(4), cfg);
  FeatureVector x{{"x0", 0.3}, {"x1", -0.7}, {"x2", 1.1}, {"x3", 0.0}};
  const Real y = 2.5;
  int steps = 0;
  for (; steps < 5000; ++steps) {
    if (std::abs(model.predict(x) - y) < 0.01) break;
    model.learn(x, y);
  }
  CHECK(std::abs(model.predict(x) - y) < 0.01);
  CHECK(steps < 5000);
}

TEST_CASE("adam step counter equals the number of learn calls") {
  MlpRegressor model(names(2), small_config(3));
  for (int i = 1; i <= 17; ++i) {
    model.learn({{"x0", 0.1 * i}, {"x1", -0.05 * i}}, 1.0);
    CHECK(model.steps() == i);
  }
}

TEST_CASE("mlp rejects non-finite input") {
  MlpRegressor model(names(2), small_config(4));
  CHECK_THROWS_AS(model.learn({{"x0", std::nan("")}}, 1.0), NumericError);
  CHECK_THROWS_AS(model.learn({{"x0", 1.0}}, std::numeric_limits<Real>::infinity()),
                  NumericError);
}

TEST_CASE("mlp ignores names outside the frozen index map") {
  MlpRegressor model(names(2), small_config(5));
  const Real base = model.predict({{"x0", 1.0}});
  CHECK(model.predict({{"x0", 1.0}, {"brand_new", 123.0}}) == base);
  CHECK(model.ignored_feature_count() > 0);
  CHECK_NOTHROW(model.learn({{"brand_new", 1.0}}, 0.5));
}

TEST_CASE("mlp learns a simple nonlinear function") {
  // y = |x| is not linear in x; a ReLU net should do much better than the
  // best linear fit (whose squared error is the variance of |x| given
  // symmetric inputs).
  MlpConfig cfg;
  cfg.seed = 31;
  cfg.standardize_inputs = true;
  MlpRegressor model(names(1), cfg);
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<Real> ux(-2.0, 2.0);
  Real running_sq_err = 0.0;
  int counted = 0;
  for (int i = 0; i < 20000; ++i) {
    Real xv = ux(rng);
    FeatureVector x{{"x0", xv}};
    Real y = std::abs(xv);
    if (i > 15000) {
      Real e = model.predict(x) - y;
      running_sq_err += e * e;
      ++counted;
    }
    model.learn(x, y);
  }
  // linear-best-fit mse for |x| on U(-2,2) is var(|x|) = 4/3 - 1 = 1/3
  CHECK(running_sq_err / counted < 0.1);
}

TEST_CASE("mlp snapshot round-trips including optimizer state") {
  MlpRegressor model(names(3), small_config(6, {5, 4}));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<Real> uv(-1.0, 1.0);
  for (int i = 0; i < 25; ++i) {
    model.learn({{"x0", uv(rng)}, {"x1", uv(rng)}, {"x2", uv(rng)}}, uv(rng));
  }
  MlpRegressor clone(names(3), small_config(999));
  clone.load_state(model.save_state());
  FeatureVector probe{{"x0", 0.4}, {"x1", -0.1}, {"x2", 0.9}};
  CHECK(clone.predict(probe) == model.predict(probe));
  // identical continued trajectories
  clone.learn(probe, 1.0);
  model.learn(probe, 1.0);
  CHECK(clone.predict(probe) == model.predict(probe));
}
