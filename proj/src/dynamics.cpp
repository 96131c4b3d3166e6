#include "mombo/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "mombo/adam.hpp"

namespace mombo {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Soft clamp of the raw log-variance into (logvar_min, logvar_max) and its
/// derivative, MBPO-style so gradients keep flowing at the rails.
void soft_clamp(double raw, double lo, double hi, double& value, double& deriv) {
  const double upper = hi - softplus(hi - raw);
  const double d_upper = sigmoid(hi - raw);
  value = lo + softplus(upper - lo);
  deriv = sigmoid(upper - lo) * d_upper;
}

struct Standardizer {
  Eigen::VectorXd mean, std;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& data) {
  Standardizer s;
  s.mean = data.colwise().mean();
  Eigen::MatrixXd centered = data.rowwise() - s.mean.transpose();
  Eigen::VectorXd var = centered.cwiseProduct(centered).colwise().sum() /
                        std::max<double>(1.0, double(data.rows() - 1));
  s.std = var.cwiseSqrt().cwiseMax(1e-8);
  return s;
}

}  // namespace

double member_nll(const EnsembleModel& model, const MlpParams& member,
                  const Eigen::MatrixXd& inputs_norm, const Eigen::MatrixXd& targets_norm) {
  const int out_dim = static_cast<int>(targets_norm.cols());
  const Eigen::MatrixXd raw = forward_batch(member, inputs_norm);
  double total = 0.0;
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (int d = 0; d < out_dim; ++d) {
      double lv, dlv;
      soft_clamp(raw(r, out_dim + d), model.cfg.logvar_min, model.cfg.logvar_max, lv, dlv);
      const double err = targets_norm(r, d) - raw(r, d);
      total += 0.5 * (kLn2Pi + lv + err * err * std::exp(-lv));
    }
  }
  return total / double(raw.rows());
}

EnsembleModel train_ensemble(const std::vector<Transition>& data, const EnsembleConfig& cfg,
                             RngStream& rng) {
  if (data.empty()) throw std::invalid_argument("train_ensemble: empty dataset");
  if (cfg.n_elites < 1 || cfg.n_elites > cfg.n_members)
    throw std::invalid_argument("train_ensemble: need 1 <= n_elites <= n_members");

  const int n = static_cast<int>(data.size());
  const int sdim = static_cast<int>(data[0].s.size());
  const int adim = static_cast<int>(data[0].a.size());
  const int in_dim = sdim + adim;
  const int out_dim = sdim + 1;

  Eigen::MatrixXd inputs(n, in_dim), targets(n, out_dim);
  for (int i = 0; i < n; ++i) {
    inputs.row(i).head(sdim) = data[i].s.transpose();
    inputs.row(i).tail(adim) = data[i].a.transpose();
    targets.row(i).head(sdim) = (data[i].s_next_sample - data[i].s).transpose();
    targets(i, sdim) = data[i].r;
  }

  EnsembleModel model;
  model.cfg = cfg;
  model.state_dim = sdim;
  model.action_dim = adim;
  {
    Standardizer in_s = fit_standardizer(inputs);
    Standardizer out_s = fit_standardizer(targets);
    model.norm = {in_s.mean, in_s.std, out_s.mean, out_s.std};
  }
  Eigen::MatrixXd inputs_norm =
      (inputs.rowwise() - model.norm.in_mean.transpose()).array().rowwise() /
      model.norm.in_std.transpose().array();
  Eigen::MatrixXd targets_norm =
      (targets.rowwise() - model.norm.out_mean.transpose()).array().rowwise() /
      model.norm.out_std.transpose().array();

  // Validation split off a seeded shuffle; at least one tuple each side.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream split_rng = rng.substream(0xDA7A);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[split_rng.uniform_index(static_cast<std::size_t>(i) + 1)]);
  const int n_val = std::max(1, std::min(cfg.val_size, n / 5));
  const int n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("train_ensemble: dataset too small to split");

  Eigen::MatrixXd train_x(n_train, in_dim), train_y(n_train, out_dim);
  Eigen::MatrixXd val_x(n_val, in_dim), val_y(n_val, out_dim);
  for (int i = 0; i < n_train; ++i) {
    train_x.row(i) = inputs_norm.row(order[i]);
    train_y.row(i) = targets_norm.row(order[i]);
  }
  for (int i = 0; i < n_val; ++i) {
    val_x.row(i) = inputs_norm.row(order[n_train + i]);
    val_y.row(i) = targets_norm.row(order[n_train + i]);
  }

  std::vector<int> widths;
  widths.push_back(in_dim);
  for (int h : cfg.hidden) widths.push_back(h);
  widths.push_back(2 * out_dim);

  for (int member = 0; member < cfg.n_members; ++member) {
    RngStream member_rng = rng.substream(1000 + static_cast<std::uint64_t>(member));
    MlpParams net = glorot_mlp(widths, member_rng);
    AdamState opt = make_adam(net, AdamConfig{cfg.lr});

    MlpParams best = net;
    double best_nll = member_nll(model, net, val_x, val_y);
    int stale = 0;

    std::vector<int> idx(n_train);
    std::iota(idx.begin(), idx.end(), 0);
    for (int epoch = 0; epoch < cfg.max_epochs && stale < cfg.early_stop_patience; ++epoch) {
      for (int i = n_train - 1; i > 0; --i)
        std::swap(idx[i], idx[member_rng.uniform_index(static_cast<std::size_t>(i) + 1)]);
      for (int start = 0; start < n_train; start += cfg.batch) {
        const int rows = std::min(cfg.batch, n_train - start);
        Eigen::MatrixXd bx(rows, in_dim), by(rows, out_dim);
        for (int r = 0; r < rows; ++r) {
          bx.row(r) = train_x.row(idx[start + r]);
          by.row(r) = train_y.row(idx[start + r]);
        }
        ForwardTape tape = forward_tape(net, bx);
        const Eigen::MatrixXd& raw = tape.output();
        Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(rows, 2 * out_dim);
        double loss = 0.0;
        for (int r = 0; r < rows; ++r) {
          for (int d = 0; d < out_dim; ++d) {
            double lv, dlv;
            soft_clamp(raw(r, out_dim + d), cfg.logvar_min, cfg.logvar_max, lv, dlv);
            const double inv_var = std::exp(-lv);
            const double err = by(r, d) - raw(r, d);
            loss += 0.5 * (kLn2Pi + lv + err * err * inv_var);
            upstream(r, d) = -err * inv_var / rows;
            upstream(r, out_dim + d) = 0.5 * (1.0 - err * err * inv_var) * dlv / rows;
          }
        }
        loss /= rows;
        if (!std::isfinite(loss))
          throw std::runtime_error("train_ensemble: loss diverged for member " +
                                   std::to_string(member));
        MlpGrads grads = backward(net, tape, upstream);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
          const double wd = l < cfg.weight_decay.size() ? cfg.weight_decay[l]
                                                        : cfg.weight_decay.back();
          grads.layers[l].weights += wd * net.layers[l].weights;
        }
        adam_step(opt, grads, net);
      }
      const double nll = member_nll(model, net, val_x, val_y);
      if (nll < best_nll - 1e-6) {
        best_nll = nll;
        best = net;
        stale = 0;
      } else {
        ++stale;
      }
    }
    model.members.push_back(std::move(best));
    model.val_nll.push_back(best_nll);
  }

  std::vector<int> ranking(cfg.n_members);
  std::iota(ranking.begin(), ranking.end(), 0);
  std::stable_sort(ranking.begin(), ranking.end(),
                   [&](int a, int b) { return model.val_nll[a] < model.val_nll[b]; });
  model.elites.assign(ranking.begin(), ranking.begin() + cfg.n_elites);
  return model;
}

DiagonalGaussian predict(const EnsembleModel& model, int member, const Eigen::VectorXd& s,
                         const Eigen::VectorXd& a) {
  if (std::find(model.elites.begin(), model.elites.end(), member) == model.elites.end())
    throw std::invalid_argument("predict: member " + std::to_string(member) +
                                " is not an elite");
  const int sdim = model.state_dim, out_dim = sdim + 1;
  Eigen::VectorXd input(sdim + model.action_dim);
  input << s, a;
  const Eigen::VectorXd x =
      (input - model.norm.in_mean).cwiseQuotient(model.norm.in_std);
  const Eigen::VectorXd raw = forward(model.members[member], x);

  DiagonalGaussian belief;
  belief.mean.resize(out_dim);
  belief.variance.resize(out_dim);
  for (int d = 0; d < out_dim; ++d) {
    double lv, dlv;
    soft_clamp(raw(out_dim + d), model.cfg.logvar_min, model.cfg.logvar_max, lv, dlv);
    const double mean_d = model.norm.out_mean(d) + model.norm.out_std(d) * raw(d);
    belief.mean(d) = mean_d;
    belief.variance(d) = model.norm.out_std(d) * model.norm.out_std(d) * std::exp(lv);
  }
  belief.mean.head(sdim) += s;  // the network predicts the state delta
  return belief;
}

std::vector<Transition> rollout(const EnsembleModel& model, const PolicyFn& policy,
                                const std::vector<Eigen::VectorXd>& starts, int k,
                                RngStream& rng, const TerminalFn& terminal) {
  if (k < 1) throw std::invalid_argument("rollout: k must be at least 1");
  const int sdim = model.state_dim;
  std::vector<Transition> out;
  out.reserve(starts.size() * static_cast<std::size_t>(k));
  for (const auto& start : starts) {
    Eigen::VectorXd s = start;
    for (int t = 0; t < k; ++t) {
      Transition tr;
      tr.s = s;
      tr.a = policy(s, rng);
      const int elite =
          model.elites[rng.uniform_index(model.elites.size())];
      const DiagonalGaussian belief = predict(model, elite, tr.s, tr.a);
      tr.s_next = belief.mean.head(sdim);
      tr.var_s_next = belief.variance.head(sdim);
      tr.var_r = belief.variance(sdim);
      tr.s_next_sample.resize(sdim);
      for (int d = 0; d < sdim; ++d)
        tr.s_next_sample(d) = tr.s_next(d) + std::sqrt(tr.var_s_next(d)) * rng.normal();
      tr.r = belief.mean(sdim) + std::sqrt(tr.var_r) * rng.normal();
      tr.done = terminal ? terminal(tr.s_next_sample) : false;
      s = tr.s_next_sample;
      const bool stop = tr.done;
      out.push_back(std::move(tr));
      if (stop) break;
    }
  }
  return out;
}

void save_ensemble(const std::string& path, const EnsembleModel& model) {
  save_mlp_sections(path, model.members);
  nlohmann::ordered_json side;
  side["state_dim"] = model.state_dim;
  side["action_dim"] = model.action_dim;
  side["elites"] = model.elites;
  side["val_nll"] = model.val_nll;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  side["norm"] = {{"in_mean", vec(model.norm.in_mean)},
                  {"in_std", vec(model.norm.in_std)},
                  {"out_mean", vec(model.norm.out_mean)},
                  {"out_std", vec(model.norm.out_std)}};
  side["config"] = {{"n_members", model.cfg.n_members},
                    {"n_elites", model.cfg.n_elites},
                    {"logvar_min", model.cfg.logvar_min},
                    {"logvar_max", model.cfg.logvar_max}};
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("save_ensemble: cannot open " + path + ".json");
  out << side.dump(2) << "\n";
}

EnsembleModel load_ensemble(const std::string& path) {
  EnsembleModel model;
  model.members = load_mlp_sections(path);
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("load_ensemble: cannot open " + path + ".json");
  nlohmann::json side = nlohmann::json::parse(in);
  model.state_dim = side.at("state_dim").get<int>();
  model.action_dim = side.at("action_dim").get<int>();
  model.elites = side.at("elites").get<std::vector<int>>();
  model.val_nll = side.at("val_nll").get<std::vector<double>>();
  auto vec = [&](const char* key) {
    auto v = side.at("norm").at(key).get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  model.norm = {vec("in_mean"), vec("in_std"), vec("out_mean"), vec("out_std")};
  model.cfg.n_members = side.at("config").at("n_members").get<int>();
  model.cfg.n_elites = side.at("config").at("n_elites").get<int>();
  model.cfg.logvar_min = side.at("config").at("logvar_min").get<double>();
  model.cfg.logvar_max = side.at("config").at("logvar_max").get<double>();
  return model;
}

}  // namespace mombo
