// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its key measurements. Heavy RL fixtures are trained once and
// shared across criteria.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <vector>

#include "mombo/bounds.hpp"
#include "mombo/envs.hpp"
#include "mombo/harness.hpp"
#include "mombo/math.hpp"
#include "mombo/mc_oracle.hpp"
#include "mombo/pevi.hpp"

using namespace mombo;
using Clock = std::chrono::steady_clock;

namespace {

void report(int id, bool pass, const char* fmt, ...) {
  std::printf("ACCEPTANCE %d [%s]: ", id, pass ? "PASS" : "FAIL");
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::printf("\n");
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct SeedRun {
  SacState sac;
  TrainResult result;
};

// Trained-once RL fixture: linereach, ratio-0.1 mixed dataset of 20k tuples,
// per-seed dynamics ensembles shared by both strategies, fixed 5000-step
// training runs at matched beta = 2.0.
struct RlFixture {
  ToyEnv env;
  OfflineDataset data;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  std::map<std::uint64_t, EnsembleModel> dynamics;
  std::map<std::uint64_t, SeedRun> mombo;
  std::map<std::uint64_t, SeedRun> mobile;
};

RlFixture& rl_fixture() {
  static RlFixture* fixture = [] {
    auto* f = new RlFixture;
    f->env = make_env("linereach");
    f->data = generate_dataset(f->env, "0.1", 20000, 0);
    for (std::uint64_t seed : f->seeds) {
      RngStream dyn_rng(seed, 100);
      f->dynamics[seed] = train_ensemble(f->data.transitions, EnsembleConfig{}, dyn_rng);
      for (Strategy strat : {Strategy::Mombo, Strategy::Mobile}) {
        SacConfig scfg;
        RngStream sac_rng(seed, strat == Strategy::Mombo ? 200 : 210);
        SeedRun run{make_sac(f->env.state_dim, f->env.action_dim, scfg, sac_rng), {}};
        PenaltyConfig pen;
        pen.strategy = strat;
        pen.beta = 2.0;
        TrainConfig tc;
        tc.steps = 5000;
        tc.eval_interval = 1000;
        RngStream train_rng(seed, strat == Strategy::Mombo ? 300 : 310);
        run.result =
            train_policy(f->data.transitions, f->dynamics[seed], f->env, run.sac, pen, tc,
                         train_rng);
        (strat == Strategy::Mombo ? f->mombo : f->mobile).emplace(seed, std::move(run));
      }
    }
    return f;
  }();
  return *fixture;
}

}  // namespace

TEST_CASE("criterion 1: scalar ReLU moments against a 1e6-sample oracle") {
  const auto t0 = Clock::now();
  RngStream rng(1001);
  const long n = 1'000'000;
  int moment_failures = 0, property_failures = 0;
  for (int pair = 0; pair < 1000; ++pair) {
    const double mu = rng.uniform(-3.0, 3.0);
    const double sigma = std::exp(rng.uniform(-2.0, 1.0));
    double m, v;
    mm_relu_scalar(mu, sigma * sigma, m, v);
    if (!(m >= mu && v <= sigma * sigma)) ++property_failures;

    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (long i = 0; i < n; ++i) {
      const double y = std::max(0.0, mu + sigma * rng.normal());
      const double y2 = y * y;
      s1 += y;
      s2 += y2;
      s3 += y2 * y;
      s4 += y2 * y2;
    }
    const double nd = static_cast<double>(n);
    const double mc_mean = s1 / nd;
    const double mc_var = (s2 - nd * mc_mean * mc_mean) / (nd - 1);
    const double se_mean = std::sqrt(mc_var / nd);
    const double m2 = s2 / nd - mc_mean * mc_mean;
    const double m4 = s4 / nd - 4 * mc_mean * s3 / nd + 6 * mc_mean * mc_mean * s2 / nd -
                      3 * mc_mean * mc_mean * mc_mean * mc_mean;
    const double se_var = std::sqrt(std::max(0.0, m4 - m2 * m2) / nd);
    if (std::abs(m - mc_mean) > 4.0 * se_mean) ++moment_failures;
    if (std::abs(v - mc_var) > 4.0 * se_var) ++moment_failures;
  }
  const bool pass = moment_failures == 0 && property_failures == 0;
  report(1, pass,
         "1000 beliefs vs 1e6-sample MC at 4 stderr: %d moment failures; "
         "Lemma properties violated on %d pairs (%.0fs)",
         moment_failures, property_failures, seconds_since(t0));
  CHECK(moment_failures == 0);
  CHECK(property_failures == 0);
}

TEST_CASE("criterion 2: network-level moment fidelity at 4 MC stderr") {
  // Honest population: depth uniform in {1,2,3} weight layers, widths 2..32,
  // input means N(0,1), variances U(0.02, 0.25). Beyond one hidden layer the
  // factorized propagation has a real mean bias, so depth-3 nets are expected
  // to exceed 4 stderr at n=1e6; the criterion is asserted as stated and the
  // measured rates are reported.
  const auto t0 = Clock::now();
  RngStream rng(1002);
  const int nets = 50;
  const int n = 1'000'000;
  int pass_count = 0;
  std::map<int, std::pair<int, int>> by_depth;  // depth -> (pass, total)
  double worst_rel = 0.0;
  for (int t = 0; t < nets; ++t) {
    const int depth = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> widths{2 + static_cast<int>(rng.uniform_index(31))};
    for (int l = 0; l + 1 < depth; ++l)
      widths.push_back(2 + static_cast<int>(rng.uniform_index(31)));
    widths.push_back(1 + static_cast<int>(rng.uniform_index(4)));
    MlpParams net = glorot_mlp(widths, rng);
    for (auto& layer : net.layers)
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.1, 0.1);
    DiagonalGaussian in;
    in.mean.resize(widths[0]);
    in.variance.resize(widths[0]);
    for (int i = 0; i < widths[0]; ++i) {
      in.mean(i) = rng.normal();
      in.variance(i) = rng.uniform(0.02, 0.25);
    }
    const MmForwardResult mm = mm_forward(net, in);
    RngStream mc_rng(2000 + t);
    const SampleBatch batch = mc_forward(net, in, n, mc_rng);
    const EmpiricalMoments moments = empirical_moments(batch);
    bool ok = true;
    for (int d = 0; d < net.output_dim(); ++d) {
      const double se = std::sqrt((*moments.variance)(d) / n);
      const double dev = std::abs(mm.output.mean(d) - moments.mean(d));
      if (dev > 4.0 * se) ok = false;
      worst_rel = std::max(worst_rel, dev / std::sqrt((*moments.variance)(d)));
    }
    pass_count += ok ? 1 : 0;
    by_depth[depth].first += ok ? 1 : 0;
    by_depth[depth].second += 1;
  }
  const double rate = static_cast<double>(pass_count) / nets;
  const bool pass = rate >= 0.95;
  report(2, pass,
         "%d/%d nets within 4 stderr (need >= 95%%); per-depth pass "
         "%d/%d (L=1), %d/%d (L=2), %d/%d (L=3); worst |dev| = %.3f of output std (%.0fs)",
         pass_count, nets, by_depth[1].first, by_depth[1].second, by_depth[2].first,
         by_depth[2].second, by_depth[3].first, by_depth[3].second, worst_rel,
         seconds_since(t0));
  CHECK(rate >= 0.95);
}

TEST_CASE("criterion 3: Lemma-4 bound dominates the empirical W1 on 200 nets") {
  const auto t0 = Clock::now();
  RngStream rng(1003);
  const int trials = 200, n = 100000;
  int holds = 0;
  for (int t = 0; t < trials; ++t) {
    const int depth = 2 + static_cast<int>(rng.uniform_index(2));
    std::vector<int> widths{1 + static_cast<int>(rng.uniform_index(6))};
    for (int l = 0; l + 1 < depth; ++l)
      widths.push_back(1 + static_cast<int>(rng.uniform_index(8)));
    widths.push_back(1);
    MlpParams net = glorot_mlp(widths, rng);
    for (auto& layer : net.layers)
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.2, 0.2);
    DiagonalGaussian in;
    in.mean.resize(widths[0]);
    in.variance.resize(widths[0]);
    for (int i = 0; i < widths[0]; ++i) {
      in.mean(i) = rng.normal();
      in.variance(i) = rng.uniform(0.05, 0.6);
    }
    const MmForwardResult mm = mm_forward(net, in);
    const BoundReport bound = mlp_mm_w1_bound(net, mm.trace);

    RngStream mc_rng(3000 + t);
    const SampleBatch pushforward = mc_forward(net, in, n, mc_rng);
    std::vector<double> a(pushforward.samples.col(0).data(),
                          pushforward.samples.col(0).data() + n);
    std::vector<double> b(n);
    const double out_std = std::sqrt(mm.output.variance(0));
    for (int i = 0; i < n; ++i) b[i] = mm.output.mean(0) + out_std * mc_rng.normal();
    if (empirical_w1(a, b) <= bound.mm_w1_bound) ++holds;
  }
  const bool pass = holds >= 198;  // 99% of 200
  report(3, pass, "bound held in %d/%d trials at n=1e5 (need >= 198) (%.0fs)", holds, trials,
         seconds_since(t0));
  CHECK(holds >= 198);
}

TEST_CASE("criterion 4: sampling-bound coverage across N and delta") {
  const auto t0 = Clock::now();
  RngStream rng(1004);
  const double rmax = 1.0, gamma = 0.5;
  const double range = rmax / (1.0 - gamma);
  const double true_mean = range / 2.0;
  const double true_std = range / std::sqrt(12.0);
  bool pass = true;
  std::string detail;
  for (double delta : {0.05, 0.1}) {
    for (int n : {4, 10, 50}) {
      const double bound = sampling_w1_bound({1.0}, n, delta, rmax, gamma);
      const int trials = 10000;
      int failures = 0;
      for (int t = 0; t < trials; ++t) {
        double s1 = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
          const double x = rng.uniform(0.0, range);
          s1 += x;
          s2 += x * x;
        }
        const double mean = s1 / n;
        const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1));
        if (std::abs(mean - true_mean) + std::abs(std::sqrt(var) - true_std) > bound)
          ++failures;
      }
      const double rate = static_cast<double>(failures) / trials;
      if (rate > delta + 0.01) pass = false;
      char buf[64];
      std::snprintf(buf, sizeof(buf), " (N=%d,d=%.2f: %.4f)", n, delta, rate);
      detail += buf;
      CHECK(rate <= delta + 0.01);
    }
  }
  report(4, pass, "failure rates within delta + 0.01:%s (%.0fs)", detail.c_str(),
         seconds_since(t0));
}

TEST_CASE("criterion 5: paper arithmetic anchor") {
  const double ratio = 11.7 * 11.7 / ((1.0 - 0.99) * (1.0 - 0.99));
  const bool pass = std::abs(ratio - 1.3689e6) < 1.0 && std::abs(ratio - 1.37e6) < 5e3;
  report(5, pass, "Rmax^2/(1-gamma)^2 = %.4e (stated 1.37e6)", ratio);
  CHECK(ratio == doctest::Approx(1.3689e6).epsilon(1e-9));
  CHECK(std::abs(ratio - 1.37e6) < 5e3);  // matches to the stated rounding
}

TEST_CASE("criterion 6: estimator comparison on the trained fixture") {
  const auto t0 = Clock::now();
  RlFixture& f = rl_fixture();
  const SacState& sac = f.mombo.at(0).sac;
  const EnsembleModel& model = f.dynamics.at(0);

  // Belief over (s', a') at a mid-dataset tuple, action at the mean state.
  const Transition& tr = f.data.transitions[f.data.transitions.size() / 2];
  const DiagonalGaussian pred = predict(model, model.elites[0], tr.s, tr.a);
  DiagonalGaussian next_state{pred.mean.head(f.env.state_dim),
                              pred.variance.head(f.env.state_dim)};
  Eigen::MatrixXd row(1, f.env.state_dim);
  row.row(0) = next_state.mean.transpose();
  const Eigen::MatrixXd a_next = policy_mean_action(sac.actor, row, sac.cfg);
  const DiagonalGaussian belief =
      concat_beliefs(next_state, point_mass(a_next.row(0).transpose()));

  RngStream rng(1006);
  const FigResult fig =
      fig_mm_vs_mc(sac.critics[0], belief, {10, 100, 1000, 10000}, 100, 100000, rng);

  // deterministic MM: re-evaluation never varies
  double mm_spread = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const MmForwardResult again = mm_forward(sac.critics[0], belief);
    mm_spread = std::max(mm_spread, std::abs(again.output.mean(0) - fig.mm_mean));
  }
  const double mm_dev = std::abs(fig.mm_mean - fig.mc_ref_mean);
  const bool slope_ok = std::abs(fig.loglog_slope + 1.0) <= 0.2;
  const bool mm_ok = mm_spread == 0.0 && mm_dev <= 3.0 * fig.mc_ref_stderr;
  report(6, slope_ok && mm_ok,
         "var slope %.3f (need -1 +- 0.2); MM spread %.1e; |MM - MC(1e5)| = %.4f vs 3se = %.4f "
         "(%.0fs)",
         fig.loglog_slope, mm_spread, mm_dev, 3.0 * fig.mc_ref_stderr, seconds_since(t0));
  CHECK(slope_ok);
  CHECK(mm_spread == 0.0);
  CHECK(mm_dev <= 3.0 * fig.mc_ref_stderr);
}

TEST_CASE("criterion 7: gradient integrity via finite differences") {
  const auto t0 = Clock::now();
  RngStream rng(1007);
  long checks = 0, failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int depth = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> widths{1 + static_cast<int>(rng.uniform_index(8))};
    for (int l = 0; l < depth; ++l) widths.push_back(1 + static_cast<int>(rng.uniform_index(8)));
    MlpParams p = glorot_mlp(widths, rng);
    for (auto& layer : p.layers)
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.3, 0.3);
    Eigen::VectorXd x(widths.front()), upstream(widths.back());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    for (Eigen::Index i = 0; i < upstream.size(); ++i) upstream(i) = rng.normal();
    MlpGrads g = backward(p, x, upstream);
    const double h = 1e-5;
    auto objective = [&]() { return upstream.dot(forward(p, x)); };
    auto check_slot = [&](double analytic, double* slot) {
      const double saved = *slot;
      *slot = saved + h;
      const double up = objective();
      *slot = saved - h;
      const double down = objective();
      *slot = saved;
      const double fd = (up - down) / (2.0 * h);
      ++checks;
      if (std::abs(analytic - fd) > std::max(1e-8, 1e-5 * std::abs(fd))) ++failures;
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& layer = p.layers[l];
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
          check_slot(g.layers[l].weights(r, c), &layer.weights(r, c));
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
        check_slot(g.layers[l].bias(i), &layer.bias(i));
    }
  }
  // tanh-squashed log-density against the numerical change of variables
  long density_checks = 0, density_failures = 0;
  for (int i = 0; i < 200; ++i) {
    const double mean = rng.uniform(-1.0, 1.0);
    const double sigma = std::exp(rng.uniform(-2.0, 0.5));
    const double a = std::tanh(rng.normal(mean, sigma));
    const double h = 1e-6;
    auto cdf = [&](double v) { return std_normal_cdf((std::atanh(v) - mean) / sigma); };
    const double density = (cdf(a + h) - cdf(a - h)) / (2.0 * h);
    const double lp = squashed_logprob_scalar(std::atanh(a), mean, sigma);
    ++density_checks;
    if (std::abs(std::exp(lp) - density) > std::max(1e-8, 1e-5 * density)) ++density_failures;
  }
  const bool pass = failures == 0 && density_failures == 0;
  report(7, pass, "%ld/%ld gradient checks passed; %ld/%ld density checks passed (%.0fs)",
         checks - failures, checks, density_checks - density_failures, density_checks,
         seconds_since(t0));
  CHECK(failures == 0);
  CHECK(density_failures == 0);
}

TEST_CASE("criterion 8: desk-scale offline RL on linereach") {
  const auto t0 = Clock::now();
  RlFixture& f = rl_fixture();
  bool all_reached = true;
  std::string detail;
  for (std::uint64_t seed : f.seeds) {
    const TrainResult& result = f.mombo.at(seed).result;
    double best = -1e300;
    long best_step = 0;
    for (const auto& point : result.curve)
      if (point.normalized_return > best) {
        best = point.normalized_return;
        best_step = point.step;
      }
    if (best < 80.0) all_reached = false;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " s%llu: %.1f@%ld", (unsigned long long)seed, best,
                  best_step);
    detail += buf;
    CHECK(best >= 80.0);
  }

  // determinism contrast on a synthetic transition from the learned model
  const SacState& sac = f.mombo.at(0).sac;
  const EnsembleModel& model = f.dynamics.at(0);
  RngStream roll_rng(1008);
  PolicyFn policy = [&](const Eigen::VectorXd& s, RngStream& r) {
    Eigen::MatrixXd srow(1, s.size());
    srow.row(0) = s.transpose();
    return Eigen::VectorXd(policy_sample(sac.actor, srow, sac.cfg, r).actions.row(0).transpose());
  };
  const std::vector<Transition> synth =
      rollout(model, policy, {f.data.transitions[0].s}, 1, roll_rng);
  const Transition& tr = synth[0];
  REQUIRE(tr.var_s_next.minCoeff() > 0.0);
  const Eigen::VectorXd a_next = Eigen::VectorXd::Constant(1, 0.25);
  const double mombo_a = target_mombo(tr, sac, 2.0, a_next);
  const double mombo_b = target_mombo(tr, sac, 2.0, a_next);
  RngStream pen_rng(1009);
  const double mobile_a = tr.r - 2.0 * penalty_mobile(tr, sac, 10, pen_rng) +
                          sac.cfg.gamma * 0.0;
  const double mobile_b = tr.r - 2.0 * penalty_mobile(tr, sac, 10, pen_rng) +
                          sac.cfg.gamma * 0.0;
  const bool deterministic = mombo_a == mombo_b;
  const bool stochastic = mobile_a != mobile_b;
  report(8, all_reached && deterministic && stochastic,
         "MOMBO best normalized per seed:%s (need >= 80, cap 5000 of 100k steps); "
         "MOMBO target bit-identical: %s; MOBILE target varies: %s (%.0fs)",
         detail.c_str(), deterministic ? "yes" : "no", stochastic ? "yes" : "no",
         seconds_since(t0));
  CHECK(deterministic);
  CHECK(stochastic);
}

TEST_CASE("criterion 9: uncertainty-quantifier accuracy and tightness") {
  const auto t0 = Clock::now();
  RlFixture& f = rl_fixture();
  int mombo_wins = 0;
  bool accuracy_valid = true;
  std::string detail;
  for (std::uint64_t seed : f.seeds) {
    PenaltyConfig mombo_pen;
    mombo_pen.strategy = Strategy::Mombo;
    mombo_pen.beta = 2.0;
    PenaltyConfig mobile_pen = mombo_pen;
    mobile_pen.strategy = Strategy::Mobile;

    RngStream rng_a(seed, 400), rng_b(seed, 400);
    const UqResult mombo_uq =
        evaluate_uq(f.env, f.mombo.at(seed).sac, f.dynamics.at(seed), mombo_pen, 10, 1000,
                    rng_a);
    const UqResult mobile_uq =
        evaluate_uq(f.env, f.mobile.at(seed).sac, f.dynamics.at(seed), mobile_pen, 10, 1000,
                    rng_b);
    for (const UqResult* r : {&mombo_uq, &mobile_uq})
      if (r->accuracy < 0.0 || r->accuracy > 1.0) accuracy_valid = false;
    if (mombo_uq.tightness >= mobile_uq.tightness) ++mombo_wins;
    char buf[96];
    std::snprintf(buf, sizeof(buf), " s%llu: mm(acc %.2f, tight %.4f) mc(acc %.2f, tight %.4f)",
                  (unsigned long long)seed, mombo_uq.accuracy, mombo_uq.tightness,
                  mobile_uq.accuracy, mobile_uq.tightness);
    detail += buf;
    CHECK(mombo_uq.accuracy >= 0.0);
    CHECK(mombo_uq.accuracy <= 1.0);
    CHECK(mobile_uq.accuracy >= 0.0);
    CHECK(mobile_uq.accuracy <= 1.0);
  }
  const bool pass = accuracy_valid && mombo_wins >= 3;
  report(9, pass, "MOMBO tightness >= MOBILE in %d/4 seeds (need >= 3);%s (%.0fs)", mombo_wins,
         detail.c_str(), seconds_since(t0));
  CHECK(mombo_wins >= 3);
}
