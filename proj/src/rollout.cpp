#include "killchain/rollout.hpp"

#include <cmath>

#include "killchain/error.hpp"

namespace killchain {

void RolloutConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("rollout gamma must lie in [0,1)");
  if (num_rollouts < 1) throw ValidationError("num_rollouts must be positive");
  if (horizon < 1 || horizon > kNumPhases) throw ValidationError("rollout horizon must lie in 1..7");
}

StepReward incremental_reward(const RewardContext& ctx) {
  return [&ctx](const PartialPath& prefix, const PathStep& next) {
    PartialPath extended = prefix;
    extended.push_back(next);
    double after = total_reward(extended, ctx).total;
    return prefix.empty() ? after : after - total_reward(prefix, ctx).total;
  };
}

PartialPath sample_rollout(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg, Rng& rng) {
  PartialPath path{start};
  std::size_t current = kernel.checked_index(start.technique);
  while (static_cast<int>(path.size()) < cfg.horizon) {
    auto next = next_phase(path.back().phase);
    if (!next) break;
    const TransitionKernel::Row& row = kernel.row(current);
    double u = uniform01(rng);
    std::size_t pick = row.successors.size() - 1;
    double cdf = 0.0;
    for (std::size_t k = 0; k < row.probs.size(); ++k) {
      cdf += row.probs[k];
      if (u < cdf) {
        pick = k;
        break;
      }
    }
    current = row.successors[pick];
    path.push_back({*next, std::string(kernel.id(current))});
  }
  return path;
}

double discounted_return(const PartialPath& rollout, double gamma, const StepReward& reward,
                         const PartialPath& context) {
  PartialPath prefix = context;
  double ret = 0.0;
  double discount = 1.0;
  for (std::size_t k = 0; k < rollout.size(); ++k) {
    if (k > 0) {
      ret += discount * reward(prefix, rollout[k]);
      discount *= gamma;
    }
    prefix.push_back(rollout[k]);
  }
  return ret;
}

std::uint64_t rollout_seed(std::uint64_t seed, std::string_view id, int r) {
  return stream_seed(stream_seed(seed, fnv1a(id)), static_cast<std::uint64_t>(r));
}

namespace {

double single_rollout(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg,
                      const StepReward& reward, const PartialPath& context, int r) {
  Rng rng(rollout_seed(cfg.rng_seed, start.technique, r));
  return discounted_return(sample_rollout(kernel, start, cfg, rng), cfg.gamma, reward, context);
}

double ordered_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

}  // namespace

double rollout_value(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg,
                     const StepReward& reward, const PartialPath& context) {
  cfg.validate();
  std::vector<double> returns(static_cast<std::size_t>(cfg.num_rollouts));
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < cfg.num_rollouts; ++r) {
    try {
      returns[static_cast<std::size_t>(r)] = single_rollout(kernel, start, cfg, reward, context, r);
    } catch (...) {
#pragma omp critical(killchain_rollout_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return ordered_mean(returns);
}

std::vector<double> state_values(const TransitionKernel& kernel, const Catalog& catalog, const RolloutConfig& cfg,
                                 const StepReward& reward) {
  cfg.validate();
  std::vector<double> values(catalog.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(catalog.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Technique& t = catalog[static_cast<std::size_t>(i)];
      values[static_cast<std::size_t>(i)] = reference::rollout_value(kernel, {t.phase, t.id}, cfg, reward);
    } catch (...) {
#pragma omp critical(killchain_rollout_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return values;
}

namespace reference {

double rollout_value(const TransitionKernel& kernel, const PathStep& start, const RolloutConfig& cfg,
                     const StepReward& reward, const PartialPath& context) {
  cfg.validate();
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(cfg.num_rollouts));
  for (int r = 0; r < cfg.num_rollouts; ++r) returns.push_back(single_rollout(kernel, start, cfg, reward, context, r));
  return ordered_mean(returns);
}

std::vector<double> state_values(const TransitionKernel& kernel, const Catalog& catalog, const RolloutConfig& cfg,
                                 const StepReward& reward) {
  std::vector<double> values;
  values.reserve(catalog.size());
  for (const Technique& t : catalog.techniques()) values.push_back(reference::rollout_value(kernel, {t.phase, t.id}, cfg, reward));
  return values;
}

}  // namespace reference

}  // namespace killchain
