#include "mombo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mombo {

namespace {

double clip(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

ToyEnv make_linereach() {
  ToyEnv env;
  env.name = "linereach";
  env.state_dim = 2;  // (position, velocity)
  env.action_dim = 1;
  env.horizon = 100;
  env.rmax = 1.0;
  // Measured over 4000 behavior-policy episodes (see test_envs).
  env.return_random = 34.66;
  env.return_expert = 94.62;
  env.step = [](const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    const double act = clip(a(0), -1.0, 1.0);
    Eigen::VectorXd next(2);
    next(0) = s(0) + 0.1 * s(1);
    next(1) = s(1) + 0.1 * act - 0.01 * s(1);
    return next;
  };
  env.reward = [](const Eigen::VectorXd& s, const Eigen::VectorXd&) {
    return 1.0 - std::min(1.0, std::abs(s(0) - 1.0));
  };
  env.terminal = [](const Eigen::VectorXd&) { return false; };
  env.reset = [](RngStream& rng) {
    Eigen::VectorXd s(2);
    s(0) = rng.uniform(0.3, 0.7);
    s(1) = rng.uniform(-0.05, 0.05);
    return s;
  };
  env.pd_action = [](const Eigen::VectorXd& s) {
    Eigen::VectorXd a(1);
    a(0) = 3.0 * (1.0 - s(0)) - 2.5 * s(1);
    return a;
  };
  return env;
}

ToyEnv make_pendulite() {
  ToyEnv env;
  env.name = "pendulite";
  env.state_dim = 2;  // (angle, angular velocity); the goal theta = 0 is unstable
  env.action_dim = 1;
  env.horizon = 100;
  env.rmax = 1.0;
  env.return_random = 43.35;
  env.return_expert = 99.07;
  env.step = [](const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
    const double act = clip(a(0), -1.0, 1.0);
    Eigen::VectorXd next(2);
    next(0) = s(0) + 0.1 * s(1);
    next(1) = s(1) + 0.1 * (std::sin(s(0)) + 2.0 * act) - 0.02 * s(1);
    return next;
  };
  env.reward = [](const Eigen::VectorXd& s, const Eigen::VectorXd&) {
    return 0.5 * (1.0 + std::cos(s(0)));
  };
  env.terminal = [](const Eigen::VectorXd&) { return false; };
  env.reset = [](RngStream& rng) {
    Eigen::VectorXd s(2);
    s(0) = rng.uniform(-1.2, 1.2);
    s(1) = rng.uniform(-0.2, 0.2);
    return s;
  };
  env.pd_action = [](const Eigen::VectorXd& s) {
    Eigen::VectorXd a(1);
    a(0) = -2.5 * std::sin(s(0)) - 1.0 * s(1);
    return a;
  };
  return env;
}

}  // namespace

std::vector<std::string> env_names() { return {"linereach", "pendulite"}; }

ToyEnv make_env(const std::string& name) {
  if (name == "linereach") return make_linereach();
  if (name == "pendulite") return make_pendulite();
  std::ostringstream msg;
  msg << "make_env: unknown environment '" << name << "'; valid names:";
  for (const auto& n : env_names()) msg << " " << n;
  throw std::invalid_argument(msg.str());
}

double normalized_return(const ToyEnv& env, double raw_return) {
  const double gap = env.return_expert - env.return_random;
  if (gap == 0.0)
    throw std::invalid_argument("normalized_return: degenerate baselines (R_exp == R_rand)");
  return 100.0 * (raw_return - env.return_random) / gap;
}

double rollout_return(const ToyEnv& env,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>& policy,
                      RngStream& rng) {
  Eigen::VectorXd s = env.reset(rng);
  double total = 0.0;
  for (int t = 0; t < env.horizon; ++t) {
    const Eigen::VectorXd a = policy(s, rng);
    total += env.reward(s, a);
    s = env.step(s, a);
    if (env.terminal(s)) break;
  }
  return total;
}

namespace {

enum class Tier { Random, Medium, Expert };

Eigen::VectorXd tier_action(const ToyEnv& env, Tier tier, const Eigen::VectorXd& s,
                            RngStream& rng) {
  Eigen::VectorXd a(env.action_dim);
  if (tier == Tier::Random) {
    for (int i = 0; i < env.action_dim; ++i) a(i) = rng.uniform(env.action_low, env.action_high);
    return a;
  }
  const double noise = (tier == Tier::Medium) ? 0.3 : 0.05;
  a = env.pd_action(s);
  for (int i = 0; i < env.action_dim; ++i)
    a(i) = clip(a(i) + rng.normal(0.0, noise), env.action_low, env.action_high);
  return a;
}

}  // namespace

OfflineDataset generate_dataset(const ToyEnv& env, const std::string& mix, int size,
                                std::uint64_t seed) {
  if (size < 1) throw std::invalid_argument("generate_dataset: size must be at least 1");

  double ratio = 0.0;
  bool mixed = false;
  if (mix == "random") {
    ratio = 0.0;
  } else if (mix == "medium" || mix == "expert") {
    ratio = 1.0;
  } else {
    try {
      ratio = std::stod(mix);
    } catch (const std::exception&) {
      throw std::invalid_argument("generate_dataset: mix must be random|medium|expert or a ratio");
    }
    if (ratio < 0.0 || ratio > 1.0)
      throw std::invalid_argument("generate_dataset: ratio must lie in [0, 1]");
    mixed = true;
  }

  OfflineDataset dataset;
  dataset.meta.env = env.name;
  dataset.meta.mix = mix;
  dataset.meta.ratio = mixed ? ratio : (mix == "random" ? 0.0 : 1.0);
  dataset.meta.size = size;
  dataset.meta.seed = seed;
  dataset.meta.policies = mixed ? "expert(PD+N(0,0.05)) at ratio, else random(uniform)"
                                : (mix == "random"   ? "random(uniform)"
                                   : mix == "medium" ? "medium(PD+N(0,0.3))"
                                                     : "expert(PD+N(0,0.05))");
  dataset.transitions.reserve(size);

  RngStream root(seed);
  int episode = 0;
  int expert_episodes = 0;
  while (static_cast<int>(dataset.transitions.size()) < size) {
    Tier tier;
    if (mixed) {
      // Deterministic interleave holding the expert fraction at the ratio.
      if (static_cast<double>(expert_episodes) < ratio * (episode + 1)) {
        tier = Tier::Expert;
        ++expert_episodes;
      } else {
        tier = Tier::Random;
      }
    } else {
      tier = (mix == "random") ? Tier::Random : (mix == "medium" ? Tier::Medium : Tier::Expert);
    }
    RngStream ep_rng = root.substream(static_cast<std::uint64_t>(episode));
    Eigen::VectorXd s = env.reset(ep_rng);
    for (int t = 0; t < env.horizon && static_cast<int>(dataset.transitions.size()) < size; ++t) {
      Transition tr;
      tr.s = s;
      tr.a = tier_action(env, tier, s, ep_rng);
      tr.r = env.reward(s, tr.a);
      s = env.step(s, tr.a);
      tr.s_next = s;
      tr.s_next_sample = s;
      tr.done = env.terminal(s);
      tr.var_s_next = Eigen::VectorXd::Zero(env.state_dim);
      tr.var_r = 0.0;
      dataset.transitions.push_back(std::move(tr));
      if (dataset.transitions.back().done) break;
    }
    ++episode;
  }
  return dataset;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    append_number(out, v(i));
  }
  out += ']';
}

Eigen::VectorXd parse_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

void save_dataset_jsonl(const std::string& path, const OfflineDataset& dataset) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("save_dataset_jsonl: cannot open " + path);

  std::string line;
  line += "{\"meta\":{\"env\":\"" + dataset.meta.env + "\",\"mix\":\"" + dataset.meta.mix +
          "\",\"ratio\":";
  append_number(line, dataset.meta.ratio);
  line += ",\"size\":" + std::to_string(dataset.meta.size) +
          ",\"seed\":" + std::to_string(dataset.meta.seed) + ",\"policies\":\"" +
          dataset.meta.policies + "\"}}\n";
  out << line;

  for (const auto& tr : dataset.transitions) {
    line.clear();
    line += "{\"s\":";
    append_vector(line, tr.s);
    line += ",\"a\":";
    append_vector(line, tr.a);
    line += ",\"r\":";
    append_number(line, tr.r);
    line += ",\"s_next\":";
    append_vector(line, tr.s_next);
    line += ",\"done\":";
    line += tr.done ? "true" : "false";
    line += ",\"var_s_next\":";
    if (tr.var_s_next.size() == 0 || tr.var_s_next.isZero(0.0)) {
      line += '0';
    } else {
      append_vector(line, tr.var_s_next);
    }
    line += ",\"var_r\":";
    append_number(line, tr.var_r);
    line += "}\n";
    out << line;
  }
}

OfflineDataset load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset_jsonl: cannot open " + path);
  OfflineDataset dataset;
  std::string line;
  bool have_meta = false;
  int state_dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (!have_meta) {
      if (!j.contains("meta"))
        throw std::runtime_error("load_dataset_jsonl: first line must carry the meta object");
      const auto& meta = j["meta"];
      dataset.meta.env = meta.value("env", "");
      dataset.meta.mix = meta.value("mix", "");
      dataset.meta.ratio = meta.value("ratio", 0.0);
      dataset.meta.size = meta.value("size", 0);
      dataset.meta.seed = meta.value("seed", std::uint64_t{0});
      dataset.meta.policies = meta.value("policies", "");
      have_meta = true;
      continue;
    }
    Transition tr;
    tr.s = parse_vector(j.at("s"));
    tr.a = parse_vector(j.at("a"));
    tr.r = j.at("r").get<double>();
    tr.s_next = parse_vector(j.at("s_next"));
    tr.s_next_sample = tr.s_next;
    tr.done = j.at("done").get<bool>();
    state_dim = static_cast<int>(tr.s.size());
    const auto& var = j.at("var_s_next");
    tr.var_s_next = var.is_array() ? parse_vector(var) : Eigen::VectorXd::Zero(state_dim);
    tr.var_r = j.at("var_r").get<double>();
    dataset.transitions.push_back(std::move(tr));
  }
  if (!have_meta) throw std::runtime_error("load_dataset_jsonl: empty file");
  return dataset;
}

}  // namespace mombo
