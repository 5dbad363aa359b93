// Evaluates one top-K treatment policy from a single randomized trajectory
// and compares the estimators with a Monte Carlo reference value.

#include <chrono>
#include <cstdio>

#include "mfope/mfope.hpp"

int main(int argc, char** argv) {
  using namespace mfope;
  const std::size_t k = argc > 1 ? std::stoul(argv[1]) : 7;

  EnvConfig cfg;  // 5x5 grid, T = 336, sigma_R = 15
  cfg.seed = 42;
  Environment env(cfg);
  const auto mu = env.mu();
  const auto traj = rollout(env, Policy::behavior_bernoulli(0.5), cfg.horizon);

  const auto target_policy = Policy::top_k(mu, k);
  const auto target = policy_actions(target_policy, traj);

  const auto t0 = std::chrono::steady_clock::now();
  EstimatorConfig est;
  const auto reports = evaluate_target(traj, target, {kAllMethods.begin(), kAllMethods.end()}, est, 7);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto truth = mc_true_value(cfg, mu, target_policy, TruthConfig{}, 11);
  std::printf("K = %zu  truth = %.3f (se %.3f)\n", k, truth.value, truth.std_error);
  for (const auto& [m, r] : reports)
    std::printf("  %-6s %9.3f  error %+9.3f\n", method_name(m).c_str(), r.value, r.value - truth.value);
  std::printf("estimation took %.1f s\n", secs);
}
