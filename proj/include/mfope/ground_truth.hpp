#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfope/error.hpp"
#include "mfope/parallel.hpp"
#include "mfope/rng.hpp"
#include "mfope/simulator.hpp"

namespace mfope {

struct TruthEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_rollouts = 0;
  std::size_t horizon = 0;
  std::size_t burn_in = 0;
};

inline void to_json(nlohmann::json& j, const TruthEstimate& t) {
  j = nlohmann::json{{"value", t.value},
                     {"std_error", t.std_error},
                     {"n_rollouts", t.n_rollouts},
                     {"horizon", t.horizon},
                     {"burn_in", t.burn_in}};
}

struct TruthConfig {
  std::size_t n_rollouts = 200;
  std::size_t horizon = 600;
  std::size_t burn_in = 100;
};

inline void to_json(nlohmann::json& j, const TruthConfig& c) {
  j = nlohmann::json{{"n_rollouts", c.n_rollouts}, {"horizon", c.horizon}, {"burn_in", c.burn_in}};
}

inline TruthConfig truth_config_from_json(const nlohmann::json& j) {
  TruthConfig c;
  c.n_rollouts = j.value("n_rollouts", c.n_rollouts);
  c.horizon = j.value("horizon", c.horizon);
  c.burn_in = j.value("burn_in", c.burn_in);
  return c;
}

/// Average reward of `policy` over fresh rollouts of the environment with
/// fixed intensities `mu`. Each rollout starts from the configured initial
/// state, drops the first `burn_in` steps and averages the rest over units
/// and time. Rollout r uses seed derive_seed(seed, {r}).
inline TruthEstimate mc_true_value(const EnvConfig& config, const std::vector<double>& mu, const Policy& policy,
                                   std::size_t n_rollouts, std::size_t horizon, std::size_t burn_in,
                                   std::uint64_t seed, std::size_t workers = 1) {
  if (n_rollouts < 1) throw ConfigError("mc_true_value: n_rollouts must be >= 1");
  if (horizon <= burn_in) throw ConfigError("mc_true_value: horizon must exceed burn_in");
  config.validate();

  std::vector<double> per_rollout(n_rollouts);
  parallel_for(n_rollouts, workers, [&](std::size_t r) {
    Environment env(config, mu, derive_seed(seed, {r}));
    double total = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto a = policy.act(env.state(), env.rng());
      const auto res = env.step(a);
      if (t >= burn_in) total += res.reward.sum();
    }
    per_rollout[r] = total / static_cast<double>((horizon - burn_in) * mu.size());
  });

  TruthEstimate out;
  out.n_rollouts = n_rollouts;
  out.horizon = horizon;
  out.burn_in = burn_in;
  double mean = 0.0;
  for (double v : per_rollout) mean += v;
  mean /= static_cast<double>(n_rollouts);
  out.value = mean;
  if (n_rollouts > 1) {
    double ss = 0.0;
    for (double v : per_rollout) ss += (v - mean) * (v - mean);
    out.std_error = std::sqrt(ss / static_cast<double>(n_rollouts - 1) / static_cast<double>(n_rollouts));
  }
  return out;
}

inline TruthEstimate mc_true_value(const EnvConfig& config, const std::vector<double>& mu, const Policy& policy,
                                   const TruthConfig& tc, std::uint64_t seed, std::size_t workers = 1) {
  return mc_true_value(config, mu, policy, tc.n_rollouts, tc.horizon, tc.burn_in, seed, workers);
}

}  // namespace mfope
