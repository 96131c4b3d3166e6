#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "mombo/dynamics.hpp"
#include "mombo/envs.hpp"

using namespace mombo;

namespace {

// Deterministic linear toy system: s' = A s + B a, r = c . s.
std::vector<Transition> linear_system_data(int n, RngStream& rng) {
  Eigen::Matrix2d a;
  a << 0.9, 0.1, -0.05, 0.95;
  Eigen::Vector2d b(0.1, 0.2);
  Eigen::Vector2d c(1.0, -0.5);
  std::vector<Transition> data;
  data.reserve(n);
  Eigen::Vector2d s(rng.normal(), rng.normal());
  for (int i = 0; i < n; ++i) {
    Transition tr;
    tr.s = s;
    tr.a = Eigen::VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
    Eigen::Vector2d next = a * s + b * tr.a(0);
    tr.r = c.dot(s);
    tr.s_next = next;
    tr.s_next_sample = next;
    tr.done = false;
    tr.var_s_next = Eigen::VectorXd::Zero(2);
    tr.var_r = 0.0;
    data.push_back(tr);
    s = next;
    if (i % 50 == 49) s = Eigen::Vector2d(rng.normal(), rng.normal());
  }
  return data;
}

EnsembleConfig small_config() {
  EnsembleConfig cfg;
  cfg.n_members = 3;
  cfg.n_elites = 2;
  cfg.hidden = {32, 32};
  cfg.max_epochs = 60;
  cfg.val_size = 200;
  return cfg;
}

}  // namespace

TEST_CASE("gaussian NLL fixture: zero residual at unit variance") {
  // per-dim NLL = 0.5 * ln(2 pi) when the residual is 0 and sigma^2 = 1
  CHECK(0.5 * std::log(2.0 * M_PI) == doctest::Approx(0.9189).epsilon(1e-4));
}

TEST_CASE("train_ensemble learns a deterministic linear system") {
  RngStream rng(31);
  std::vector<Transition> data = linear_system_data(4000, rng);
  EnsembleConfig cfg = small_config();
  RngStream train_rng(32);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);

  REQUIRE(static_cast<int>(model.members.size()) == cfg.n_members);
  REQUIRE(static_cast<int>(model.elites.size()) == cfg.n_elites);

  // held-out one-step predictions
  RngStream test_rng(33);
  std::vector<Transition> held_out = linear_system_data(500, test_rng);
  double sq_err = 0.0;
  double max_var = 0.0;
  int count = 0;
  for (const auto& tr : held_out) {
    const DiagonalGaussian belief = predict(model, model.elites[0], tr.s, tr.a);
    sq_err += (belief.mean.head(2) - tr.s_next).squaredNorm();
    max_var = std::max(max_var, belief.variance.maxCoeff());
    count += 2;
  }
  CHECK(std::sqrt(sq_err / count) <= 0.05);
  CHECK(max_var <= 0.1);
}

TEST_CASE("train_ensemble: one repeated transition drives variance to the floor") {
  Transition tr;
  tr.s = Eigen::Vector2d(0.5, -0.5);
  tr.a = Eigen::VectorXd::Constant(1, 0.25);
  tr.r = 0.7;
  tr.s_next = Eigen::Vector2d(0.6, -0.4);
  tr.s_next_sample = tr.s_next;
  tr.var_s_next = Eigen::VectorXd::Zero(2);
  std::vector<Transition> data(300, tr);
  EnsembleConfig cfg = small_config();
  cfg.n_members = 1;
  cfg.n_elites = 1;
  cfg.max_epochs = 100;
  RngStream rng(34);
  EnsembleModel model = train_ensemble(data, cfg, rng);
  const DiagonalGaussian belief = predict(model, 0, tr.s, tr.a);
  // the target is constant: the mean converges and variance hits the clamp
  CHECK((belief.mean.head(2) - tr.s_next).cwiseAbs().maxCoeff() <= 0.05);
  CHECK(std::abs(belief.mean(2) - tr.r) <= 0.05);
  // normalization std collapses on constant targets, so denormalized variance
  // lands at (floor) * out_std^2, effectively zero
  CHECK(belief.variance.maxCoeff() <= 1e-10);
}

TEST_CASE("predict: variance respects the log-variance clamp range") {
  RngStream rng(35);
  std::vector<Transition> data = linear_system_data(800, rng);
  EnsembleConfig cfg = small_config();
  cfg.max_epochs = 10;
  RngStream train_rng(36);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);
  for (int i = 0; i < 100; ++i) {
    const auto& tr = data[i * 7];
    for (int elite : model.elites) {
      const DiagonalGaussian belief = predict(model, elite, tr.s, tr.a);
      for (int d = 0; d < belief.dim(); ++d) {
        const double normalized_var =
            belief.variance(d) / (model.norm.out_std(d) * model.norm.out_std(d));
        CHECK(normalized_var >= std::exp(model.cfg.logvar_min) * (1 - 1e-9));
        CHECK(normalized_var <= std::exp(model.cfg.logvar_max) * (1 + 1e-9));
      }
    }
  }
}

TEST_CASE("predict: standardized residuals on training data are unbiased") {
  RngStream rng(37);
  std::vector<Transition> data = linear_system_data(3000, rng);
  EnsembleConfig cfg = small_config();
  RngStream train_rng(38);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);
  Eigen::Vector3d z_sum = Eigen::Vector3d::Zero();
  int n = 0;
  for (std::size_t i = 0; i < data.size(); i += 3) {
    const auto& tr = data[i];
    const DiagonalGaussian belief = predict(model, model.elites[0], tr.s, tr.a);
    Eigen::Vector3d target;
    target << tr.s_next, tr.r;
    z_sum += (target - belief.mean).cwiseQuotient(belief.variance.cwiseSqrt().cwiseMax(1e-12));
    ++n;
  }
  const Eigen::Vector3d mean_z = z_sum / n;
  for (int d = 0; d < 3; ++d) CHECK(std::abs(mean_z(d)) <= 0.1);
}

TEST_CASE("predict rejects non-elite members") {
  RngStream rng(39);
  std::vector<Transition> data = linear_system_data(400, rng);
  EnsembleConfig cfg = small_config();
  cfg.max_epochs = 3;
  RngStream train_rng(40);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);
  int non_elite = -1;
  for (int m = 0; m < cfg.n_members; ++m)
    if (std::find(model.elites.begin(), model.elites.end(), m) == model.elites.end())
      non_elite = m;
  REQUIRE(non_elite >= 0);
  CHECK_THROWS_AS(predict(model, non_elite, data[0].s, data[0].a), std::invalid_argument);
}

TEST_CASE("elite selection is stable with ties broken by lower index") {
  EnsembleModel model;
  model.val_nll = {0.5, 0.2, 0.5, 0.1};
  std::vector<int> ranking{0, 1, 2, 3};
  std::stable_sort(ranking.begin(), ranking.end(),
                   [&](int a, int b) { return model.val_nll[a] < model.val_nll[b]; });
  const std::vector<int> elites(ranking.begin(), ranking.begin() + 3);
  CHECK(elites == std::vector<int>{3, 1, 0});  // index 0 beats the tied index 2
}

TEST_CASE("rollout: zero predictive variance reproduces the mean exactly") {
  // Hand-built ensemble with zero output std: the draw is mean + 0 * eps.
  EnsembleModel model;
  model.state_dim = 2;
  model.action_dim = 1;
  model.cfg.n_members = 1;
  model.cfg.n_elites = 1;
  model.elites = {0};
  model.val_nll = {0.0};
  RngStream net_rng(41);
  model.members.push_back(glorot_mlp({3, 8, 6}, net_rng));
  model.norm.in_mean = Eigen::VectorXd::Zero(3);
  model.norm.in_std = Eigen::VectorXd::Ones(3);
  model.norm.out_mean = Eigen::Vector3d(0.1, -0.1, 0.5);
  model.norm.out_std = Eigen::VectorXd::Zero(3);  // degenerate: all mass at out_mean

  PolicyFn policy = [](const Eigen::VectorXd&, RngStream&) {
    return Eigen::VectorXd::Zero(1);
  };
  RngStream rng(42);
  std::vector<Transition> rollouts =
      rollout(model, policy, {Eigen::Vector2d(1.0, 2.0)}, 1, rng);
  REQUIRE(rollouts.size() == 1);
  CHECK(rollouts[0].s_next_sample == rollouts[0].s_next);
  CHECK(rollouts[0].s_next == Eigen::Vector2d(1.1, 1.9));  // s + out_mean delta
  CHECK(rollouts[0].r == 0.5);
  CHECK(rollouts[0].var_r == 0.0);
}

TEST_CASE("rollout: transition accounting and stored variances") {
  RngStream rng(43);
  std::vector<Transition> data = linear_system_data(1500, rng);
  EnsembleConfig cfg = small_config();
  cfg.n_members = 2;
  cfg.n_elites = 1;  // single elite keeps the generating member identifiable
  cfg.max_epochs = 20;
  RngStream train_rng(44);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);

  PolicyFn policy = [](const Eigen::VectorXd&, RngStream& r) {
    return Eigen::VectorXd::Constant(1, r.uniform(-1.0, 1.0));
  };
  std::vector<Eigen::VectorXd> starts;
  for (int i = 0; i < 7; ++i) starts.push_back(data[i * 100].s);
  RngStream roll_rng(45);
  std::vector<Transition> rollouts = rollout(model, policy, starts, 5, roll_rng);
  CHECK(rollouts.size() <= 7 * 5);
  CHECK(rollouts.size() == 35);  // no terminal predicate given
  for (const auto& tr : rollouts) {
    const DiagonalGaussian belief = predict(model, model.elites[0], tr.s, tr.a);
    CHECK(tr.var_s_next == belief.variance.head(2));
    CHECK(tr.var_r == belief.variance(2));
    CHECK(tr.s_next == belief.mean.head(2));
    CHECK(tr.var_s_next.minCoeff() > 0.0);  // synthetic tuples carry variance
  }
}

TEST_CASE("rollout: fixed seed reproduces the buffer bit-identically") {
  RngStream rng(46);
  std::vector<Transition> data = linear_system_data(600, rng);
  EnsembleConfig cfg = small_config();
  cfg.max_epochs = 5;
  RngStream train_rng(47);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);
  PolicyFn policy = [](const Eigen::VectorXd& s, RngStream& r) {
    return Eigen::VectorXd::Constant(1, std::tanh(s(0)) + 0.1 * r.normal());
  };
  std::vector<Eigen::VectorXd> starts{data[0].s, data[100].s};
  RngStream ra(48), rb(48);
  std::vector<Transition> a = rollout(model, policy, starts, 4, ra);
  std::vector<Transition> b = rollout(model, policy, starts, 4, rb);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].s_next_sample == b[i].s_next_sample);
    CHECK(a[i].r == b[i].r);
    CHECK(a[i].a == b[i].a);
  }
}

TEST_CASE("rollout honours the termination predicate") {
  EnsembleModel model;
  model.state_dim = 1;
  model.action_dim = 1;
  model.cfg.n_members = 1;
  model.cfg.n_elites = 1;
  model.elites = {0};
  model.val_nll = {0.0};
  RngStream net_rng(49);
  model.members.push_back(glorot_mlp({2, 4, 4}, net_rng));
  model.norm.in_mean = Eigen::VectorXd::Zero(2);
  model.norm.in_std = Eigen::VectorXd::Ones(2);
  model.norm.out_mean = Eigen::Vector2d(1.0, 0.0);  // always step +1
  model.norm.out_std = Eigen::VectorXd::Zero(2);
  PolicyFn policy = [](const Eigen::VectorXd&, RngStream&) {
    return Eigen::VectorXd::Zero(1);
  };
  TerminalFn terminal = [](const Eigen::VectorXd& s) { return s(0) >= 2.5; };
  RngStream rng(50);
  std::vector<Transition> rollouts =
      rollout(model, policy, {Eigen::VectorXd::Zero(1)}, 10, rng, terminal);
  CHECK(rollouts.size() == 3);  // 0 -> 1 -> 2 -> 3 (done)
  CHECK(rollouts.back().done);
}

TEST_CASE("ensemble checkpoints round-trip through the container and sidecar") {
  namespace fs = std::filesystem;
  RngStream rng(51);
  std::vector<Transition> data = linear_system_data(500, rng);
  EnsembleConfig cfg = small_config();
  cfg.max_epochs = 3;
  RngStream train_rng(52);
  EnsembleModel model = train_ensemble(data, cfg, train_rng);
  const std::string path = fs::temp_directory_path() / "mombo_ensemble.net";
  save_ensemble(path, model);
  EnsembleModel loaded = load_ensemble(path);
  CHECK(loaded.members.size() == model.members.size());
  CHECK(loaded.elites == model.elites);
  CHECK(loaded.norm.in_mean == model.norm.in_mean);
  CHECK(loaded.norm.out_std == model.norm.out_std);
  const auto& tr = data[42];
  const DiagonalGaussian a = predict(model, model.elites[0], tr.s, tr.a);
  const DiagonalGaussian b = predict(loaded, loaded.elites[0], tr.s, tr.a);
  CHECK(a.mean == b.mean);
  CHECK(a.variance == b.variance);
  fs::remove(path);
  fs::remove(path + ".json");
}

TEST_CASE("train_ensemble rejects empty data and bad elite counts") {
  EnsembleConfig cfg = small_config();
  RngStream rng(53);
  CHECK_THROWS_AS(train_ensemble({}, cfg, rng), std::invalid_argument);
  cfg.n_elites = 5;
  cfg.n_members = 3;
  std::vector<Transition> data = linear_system_data(50, rng);
  CHECK_THROWS_AS(train_ensemble(data, cfg, rng), std::invalid_argument);
}
