#pragma once

#include <filesystem>

#include "killchain/mcts.hpp"
#include "killchain/pvn.hpp"
#include "killchain/reward.hpp"
#include "killchain/rollout.hpp"

namespace killchain {

/// Every tunable of the pipeline. Absent keys keep their defaults.
struct EngineConfig {
  RewardWeights reward_weights;
  double alpha = kDefaultAlpha;
  double prior_temperature = kDefaultPriorTemperature;
  RolloutConfig rollout;
  SearchConfig search;
  PvnConfig pvn;

  void validate() const;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

/// Throws ValidationError on unknown keys or out-of-range values.
EngineConfig config_from_json(const Json& j);
Json config_to_json(const EngineConfig& cfg);
EngineConfig load_config(const std::filesystem::path& path);

}  // namespace killchain
