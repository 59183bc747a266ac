#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "killchain/kernel.hpp"
#include "killchain/random.hpp"
#include "killchain/reward.hpp"

namespace killchain {

struct RolloutConfig {
  double gamma = 0.9;
  int num_rollouts = 64;
  int horizon = kNumPhases;  // max steps in a sampled path, start included
  std::uint64_t rng_seed = 0;

  void validate() const;

  friend bool operator==(const RolloutConfig&, const RolloutConfig&) = default;
};

/// Reward r for moving from the end of `prefix` to `next`. Must be pure:
/// rollouts call it concurrently.
using StepReward = std::function<double(const PartialPath& prefix, const PathStep& next)>;

/// total_reward(prefix + next) - total_reward(prefix).
StepReward incremental_reward(const RewardContext& ctx);

/// Forward sample through the kernel by inverse CDF over the stored row order,
/// stopping at objectives or after `cfg.horizon` steps.
PartialPath sample_rollout(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg, Rng& rng);

/// sum_k gamma^k r_k over the transitions of `rollout`, each scored against
/// `context` followed by the rollout prefix.
double discounted_return(const PartialPath& rollout, double gamma, const StepReward& reward,
                         const PartialPath& context = {});

/// Seed of rollout `r` started from technique `id`.
std::uint64_t rollout_seed(std::uint64_t seed, std::string_view id, int r);

/// Monte Carlo mean of discounted returns from `start`. Rollouts run in
/// parallel, each on its own stream; returns are summed in index order.
double rollout_value(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg,
                     const StepReward& reward, const PartialPath& context = {});

/// V_MDP for every catalog technique, indexed like the catalog. Parallel over states.
std::vector<double> state_values(const TransitionKernel& kernel, const Catalog& catalog, const RolloutConfig& cfg,
                                 const StepReward& reward);

namespace reference {
double rollout_value(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg,
                     const StepReward& reward, const PartialPath& context = {});
std::vector<double> state_values(const TransitionKernel& kernel, const Catalog& catalog, const RolloutConfig& cfg,
                                 const StepReward& reward);
}  // namespace reference

}  // namespace killchain
