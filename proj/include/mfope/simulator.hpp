#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mfope/error.hpp"
#include "mfope/rng.hpp"
#include "mfope/topology.hpp"

namespace mfope {

/// How drivers move between steps.
///
/// `redistribute` sends each unit's drivers over its closed neighborhood in
/// proportion to the attraction rates there (total drivers are conserved).
/// `as_written` applies D_{i,t+1} = nu_i D_i / sum_{j in N(i)} nu_j literally;
/// it does not conserve drivers and drains the grid within a few dozen steps.
enum class DriverUpdate { redistribute, as_written };

NLOHMANN_JSON_SERIALIZE_ENUM(DriverUpdate, {{DriverUpdate::redistribute, "redistribute"},
                                            {DriverUpdate::as_written, "as_written"}})

inline constexpr int kTimeOfDayPeriod = 48;

struct EnvConfig {
  std::size_t rows = 5;
  std::size_t cols = 5;
  double mu_mean = 100.0;
  double mu_sd = 25.0;
  double init_drivers = 80.0;
  double sigma_r = 15.0;
  std::size_t horizon = 336;
  std::uint64_t seed = 0;
  bool include_time_of_day = false;
  double driver_floor = 1.0;
  double driver_cap = 1e12;
  bool include_self = false;
  bool poisson_orders = true;  // false: O_{i,t} = mu_i exactly
  DriverUpdate driver_update = DriverUpdate::redistribute;
  std::optional<SpatialGraph> adjacency;  // overrides rows x cols when set

  void validate() const {
    if (!(mu_sd >= 0)) throw ConfigError("env: mu_sd must be >= 0");
    if (!(sigma_r >= 0)) throw ConfigError("env: sigma_r must be >= 0");
    if (!(init_drivers > 0)) throw ConfigError("env: init_drivers must be > 0");
    if (!(driver_floor > 0)) throw ConfigError("env: driver_floor must be > 0");
    if (!(driver_cap > init_drivers)) throw ConfigError("env: driver_cap must exceed init_drivers");
    if (horizon == 0) throw ConfigError("env: horizon must be positive");
    if (!adjacency && rows * cols < 2) throw ConfigError("env: grid needs at least two units");
  }

  SpatialGraph graph() const {
    if (adjacency) return *adjacency;
    return grid_adjacency(rows, cols, include_self);
  }

  std::size_t state_dim() const { return include_time_of_day ? 4 : 3; }
};

inline void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"rows", c.rows},
                     {"cols", c.cols},
                     {"mu_mean", c.mu_mean},
                     {"mu_sd", c.mu_sd},
                     {"init_drivers", c.init_drivers},
                     {"sigma_r", c.sigma_r},
                     {"horizon", c.horizon},
                     {"seed", c.seed},
                     {"include_time_of_day", c.include_time_of_day},
                     {"driver_floor", c.driver_floor},
                     {"driver_cap", c.driver_cap},
                     {"include_self", c.include_self},
                     {"poisson_orders", c.poisson_orders},
                     {"driver_update", c.driver_update}};
  if (c.adjacency) j["adjacency"] = *c.adjacency;
}

inline EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  try {
    c.rows = j.value("rows", c.rows);
    c.cols = j.value("cols", c.cols);
    c.mu_mean = j.value("mu_mean", c.mu_mean);
    c.mu_sd = j.value("mu_sd", c.mu_sd);
    c.init_drivers = j.value("init_drivers", c.init_drivers);
    c.sigma_r = j.value("sigma_r", c.sigma_r);
    c.horizon = j.value("horizon", c.horizon);
    c.seed = j.value("seed", c.seed);
    c.include_time_of_day = j.value("include_time_of_day", c.include_time_of_day);
    c.driver_floor = j.value("driver_floor", c.driver_floor);
    c.driver_cap = j.value("driver_cap", c.driver_cap);
    c.include_self = j.value("include_self", c.include_self);
    c.poisson_orders = j.value("poisson_orders", c.poisson_orders);
    c.driver_update = j.value("driver_update", c.driver_update);
    if (j.contains("adjacency")) c.adjacency = graph_from_json(j.at("adjacency"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("env config: ") + e.what());
  }
  c.validate();
  return c;
}

/// nu = 1.5 exp(a) + 0.5 o / max(d, floor).
inline double attraction(int a, double orders, double drivers, double driver_floor) {
  return 1.5 * std::exp(static_cast<double>(a)) + 0.5 * orders / std::max(drivers, driver_floor);
}

/// M_t = 0.5 (1 - |D - O| / (1 + D + O)) + 0.5 M_{t-1}.
inline double mismatch_update(double drivers, double orders, double previous) {
  return 0.5 * (1.0 - std::abs(drivers - orders) / (1.0 + drivers + orders)) + 0.5 * previous;
}

// ---------------------------------------------------------------------------
// Policies

class Policy {
 public:
  enum class Kind { behavior_bernoulli, top_k, fixed, custom };
  using Rule = std::function<ActionVector(const GlobalState&)>;

  static Policy behavior_bernoulli(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("behavior_bernoulli: p must be in (0,1)");
    Policy pol;
    pol.kind_ = Kind::behavior_bernoulli;
    pol.p_ = p;
    return pol;
  }

  static Policy fixed(ActionVector a) {
    check_binary(a);
    Policy pol;
    pol.kind_ = Kind::fixed;
    pol.actions_ = std::move(a);
    return pol;
  }

  /// Treat the K units with largest mu (ties to the lower index).
  static Policy top_k(std::span<const double> mu, std::size_t k) {
    if (k > mu.size()) throw ConfigError("top_k: K exceeds the number of units");
    std::vector<std::size_t> order(mu.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mu[a] > mu[b]; });
    ActionVector a(mu.size(), 0);
    for (std::size_t r = 0; r < k; ++r) a[order[r]] = 1;
    Policy pol;
    pol.kind_ = Kind::top_k;
    pol.actions_ = std::move(a);
    pol.k_ = k;
    return pol;
  }

  static Policy custom(Rule rule) {
    Policy pol;
    pol.kind_ = Kind::custom;
    pol.rule_ = std::move(rule);
    return pol;
  }

  Kind kind() const { return kind_; }
  bool stochastic() const { return kind_ == Kind::behavior_bernoulli; }
  bool state_agnostic() const { return kind_ == Kind::top_k || kind_ == Kind::fixed; }
  double treatment_probability() const { return p_; }
  std::size_t k() const { return k_; }

  /// The fixed assignment of a state-agnostic policy.
  const ActionVector& assignment() const { return actions_; }

  ActionVector act(const GlobalState& s, Rng& rng) const {
    switch (kind_) {
      case Kind::behavior_bernoulli: {
        std::bernoulli_distribution coin(p_);
        ActionVector a(static_cast<std::size_t>(s.rows()));
        for (auto& v : a) v = coin(rng) ? 1 : 0;
        return a;
      }
      case Kind::top_k:
      case Kind::fixed:
        if (actions_.size() != static_cast<std::size_t>(s.rows()))
          throw ConfigError("policy assignment length != n_units");
        return actions_;
      case Kind::custom: {
        auto a = rule_(s);
        check_binary(a);
        return a;
      }
    }
    return {};
  }

  /// Deterministic evaluation; stochastic policies are rejected.
  ActionVector act(const GlobalState& s) const {
    if (stochastic()) throw ConfigError("a stochastic policy needs an RNG");
    Rng unused(0);
    return act(s, unused);
  }

 private:
  Kind kind_ = Kind::fixed;
  double p_ = 0.5;
  std::size_t k_ = 0;
  ActionVector actions_;
  Rule rule_;
};

// ---------------------------------------------------------------------------
// Environment

struct Trajectory {
  std::vector<GlobalState> states;   // T + 1
  std::vector<ActionVector> actions;  // T
  Eigen::MatrixXd rewards;            // N x T
  SpatialGraph graph = grid_adjacency(1, 2);
  EnvConfig config;

  std::size_t horizon() const { return actions.size(); }
  std::size_t n_units() const { return graph.n_units(); }

  void validate() const {
    if (states.size() != actions.size() + 1) throw ConfigError("trajectory: |states| != |actions| + 1");
    if (static_cast<std::size_t>(rewards.cols()) != actions.size() ||
        static_cast<std::size_t>(rewards.rows()) != graph.n_units())
      throw ConfigError("trajectory: reward matrix shape");
    for (const auto& a : actions) {
      if (a.size() != graph.n_units()) throw ConfigError("trajectory: action length");
      check_binary(a);
    }
  }
};

class Environment {
 public:
  /// Draws mu_i ~ Normal(mu_mean, mu_sd^2), clamped below at 1, from the seed.
  explicit Environment(EnvConfig config)
      : Environment(config, draw_mu(config), derive_seed(config.seed, {1})) {}

  /// Uses the supplied intensities; `seed` drives orders, noise and policies.
  Environment(EnvConfig config, std::vector<double> mu, std::uint64_t seed)
      : config_(std::move(config)), graph_(config_.graph()), mu_(std::move(mu)), rng_(seed) {
    config_.validate();
    const auto n = graph_.n_units();
    if (mu_.size() != n) throw ConfigError("environment: mu length != n_units");
    drivers_.assign(n, config_.init_drivers);
    orders_.resize(n);
    mismatch_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      orders_[i] = draw_orders(i);
      mismatch_[i] = mismatch_update(drivers_[i], orders_[i], 0.5);
    }
  }

  static std::vector<double> draw_mu(const EnvConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, {0}));
    std::normal_distribution<double> normal(config.mu_mean, config.mu_sd);
    std::vector<double> mu(config.graph().n_units());
    for (auto& m : mu) m = std::max(1.0, config.mu_sd > 0 ? normal(rng) : config.mu_mean);
    return mu;
  }

  const EnvConfig& config() const { return config_; }
  const SpatialGraph& graph() const { return graph_; }
  const std::vector<double>& mu() const { return mu_; }
  std::size_t time() const { return t_; }
  Rng& rng() { return rng_; }

  GlobalState state() const {
    const auto n = graph_.n_units();
    GlobalState s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config_.state_dim()));
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      s(r, 0) = drivers_[i];
      s(r, 1) = orders_[i];
      s(r, 2) = mismatch_[i];
      if (config_.include_time_of_day) s(r, 3) = static_cast<double>(t_ % kTimeOfDayPeriod);
    }
    return s;
  }

  struct StepResult {
    GlobalState state;
    Eigen::VectorXd reward;
  };

  StepResult step(std::span<const int> actions) {
    const auto n = graph_.n_units();
    if (actions.size() != n) throw ConfigError("step: action length != n_units");
    check_binary(actions);

    std::vector<double> nu(n);
    for (std::size_t i = 0; i < n; ++i)
      nu[i] = attraction(actions[i], orders_[i], drivers_[i], config_.driver_floor);

    std::vector<double> next_drivers(n, 0.0);
    if (config_.driver_update == DriverUpdate::as_written) {
      for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (auto j : graph_.neighbors(i)) denom += nu[j];
        next_drivers[i] = nu[i] * drivers_[i] / denom;
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const auto closed = graph_.closed_neighbors(j);
        double denom = 0.0;
        for (auto k : closed) denom += nu[k];
        for (auto k : closed) next_drivers[k] += drivers_[j] * nu[k] / denom;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(next_drivers[i]) || next_drivers[i] > config_.driver_cap)
        throw NumericError("step: driver count overflow at unit " + std::to_string(i));
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::VectorXd reward(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      drivers_[i] = next_drivers[i];
      orders_[i] = draw_orders(i);
      mismatch_[i] = mismatch_update(drivers_[i], orders_[i], mismatch_[i]);
      const double eps = config_.sigma_r > 0 ? config_.sigma_r * noise(rng_) : 0.0;
      reward(static_cast<Eigen::Index>(i)) =
          mismatch_[i] * std::min(drivers_[i], orders_[i]) + eps;
    }
    ++t_;
    return {state(), std::move(reward)};
  }

 private:
  double draw_orders(std::size_t i) {
    if (!config_.poisson_orders) return mu_[i];
    std::poisson_distribution<long> pois(mu_[i]);
    return static_cast<double>(pois(rng_));
  }

  EnvConfig config_;
  SpatialGraph graph_;
  std::vector<double> mu_;
  Rng rng_;
  std::vector<double> drivers_, orders_, mismatch_;
  std::size_t t_ = 0;
};

inline Environment init_env(const EnvConfig& config) { return Environment(config); }

/// Alternates action selection and `step` for T steps from the current state.
inline Trajectory rollout(Environment& env, const Policy& policy, std::size_t horizon) {
  if (horizon == 0) throw ConfigError("rollout: horizon must be >= 1");
  Trajectory traj;
  traj.graph = env.graph();
  traj.config = env.config();
  traj.states.reserve(horizon + 1);
  traj.actions.reserve(horizon);
  traj.rewards.resize(static_cast<Eigen::Index>(env.graph().n_units()),
                      static_cast<Eigen::Index>(horizon));
  traj.states.push_back(env.state());
  for (std::size_t t = 0; t < horizon; ++t) {
    auto a = policy.act(traj.states.back(), env.rng());
    auto res = env.step(a);
    traj.actions.push_back(std::move(a));
    traj.rewards.col(static_cast<Eigen::Index>(t)) = res.reward;
    traj.states.push_back(std::move(res.state));
  }
  return traj;
}

/// pi(S_t) for every recorded state (length T + 1). Stochastic policies draw
/// from `rng`, making the result a single realization of the randomized target.
inline std::vector<ActionVector> policy_actions(const Policy& policy, const Trajectory& traj,
                                                Rng* rng = nullptr) {
  std::vector<ActionVector> out;
  out.reserve(traj.states.size());
  for (const auto& s : traj.states) {
    if (policy.stochastic()) {
      if (rng == nullptr) throw ConfigError("policy_actions: stochastic target needs an RNG");
      out.push_back(policy.act(s, *rng));
    } else {
      out.push_back(policy.act(s));
    }
  }
  return out;
}

}  // namespace mfope
