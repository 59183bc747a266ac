#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "killchain/pvn.hpp"
#include "killchain/reward.hpp"
#include "killchain/rollout.hpp"

namespace killchain {

enum class EvaluatorKind { trained_pvn, heuristic };

/// What a non-terminal leaf backs up.
enum class LeafValue {
  evaluator,         // v from the evaluator alone
  reward_to_go,      // total_reward(prefix) + v
};

struct SearchConfig {
  int simulations = 2000;
  double c_puct = 1.5;
  double beta1 = 1.0;  // weight of log pi_theta in the blended prior
  double beta2 = 1.0;  // weight of log P_MDP
  std::uint64_t rng_seed = 0;
  EvaluatorKind evaluator = EvaluatorKind::heuristic;
  LeafValue leaf_value = LeafValue::evaluator;
  double dirichlet_alpha = 0.3;
  double dirichlet_epsilon = 0.0;  // root noise mixing weight; 0 disables noise

  void validate() const;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

struct Evaluation {
  std::vector<double> policy;  // over the candidates, same order
  double value = 0.0;
};

/// Leaf evaluator. Implementations must be safe to call concurrently.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  /// `prefix` is the chain so far (empty at the synthetic root); candidates
  /// are the techniques of `phase`, the phase after the prefix.
  virtual Evaluation evaluate(const PartialPath& prefix, Phase phase,
                              std::span<const std::string> candidates) const = 0;
};

/// Phase priors as policy, mean candidate V_MDP as value.
class HeuristicEvaluator final : public Evaluator {
 public:
  HeuristicEvaluator(const Catalog& catalog, const PhasePriors& priors, std::vector<double> state_values);

  /// State values estimated by kernel rollouts of the incremental reward.
  static HeuristicEvaluator from_rollouts(const RewardContext& ctx, const RolloutConfig& rollout);

  Evaluation evaluate(const PartialPath& prefix, Phase phase, std::span<const std::string> candidates) const override;

  double state_value(std::string_view id) const;

 private:
  const Catalog& catalog_;
  const PhasePriors& priors_;
  std::vector<double> values_;
};

/// Trained policy-value network evaluated on the store's context.
class NetworkEvaluator final : public Evaluator {
 public:
  NetworkEvaluator(const PvnWeights& weights, const EmbeddingStore& store);

  Evaluation evaluate(const PartialPath& prefix, Phase phase, std::span<const std::string> candidates) const override;

 private:
  const PvnWeights& weights_;
  const EmbeddingStore& store_;
};

struct SearchNode {
  std::optional<PathStep> state;  // nullopt for the synthetic pre-recon root
  int visit_count = 0;            // N
  double total_value = 0.0;       // W
  double mean_value = 0.0;        // Q
  double prior = 0.0;             // P
  int evaluations = 0;            // simulations that ended at this node
  bool expanded = false;
  std::vector<SearchNode> children;  // sorted by technique id

  const SearchNode* child(std::string_view id) const;
};

/// Q + c_puct * P * sqrt(N_parent) / (1 + N_child).
double puct_score(const SearchNode& child, int parent_visits, double c_puct);

/// softmax(beta1 log pi + beta2 log p_mdp), logs clamped at kProbEpsilon.
std::vector<double> blend_priors(std::span<const double> pi, std::span<const double> p_mdp, double beta1,
                                 double beta2);

/// N += 1, W += v, Q = W / N on every node of `path`.
void backpropagate(std::span<SearchNode* const> path, double leaf_value);

struct SimulationRecord {
  int tree = 0;
  int index = 0;
  std::vector<std::string> edges;  // techniques selected from the root
  bool terminal = false;
  std::vector<std::string> candidates;  // empty for terminal leaves
  std::vector<double> policy;
  std::vector<double> blended_priors;
  double evaluator_value = 0.0;
  double value = 0.0;  // backed up
};

struct SearchTrace {
  std::vector<SimulationRecord> simulations;

  Json to_json() const;
};

struct SearchResult {
  PartialPath best_path;  // prefix followed by the most-visited continuation
  std::vector<std::string> root_candidates;
  std::vector<double> pi_target;  // root child visits, normalized
  SearchNode root;
  SearchTrace trace;
};

/// Runs exactly cfg.simulations simulations from the state reached by
/// `prefix` (the synthetic root when empty). Deterministic given cfg.rng_seed.
SearchResult search(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                    const PartialPath& prefix = {});

/// Root-parallel search: `jobs` independent trees share the simulation budget
/// and are merged by summing N and W. Equals search() for jobs == 1.
SearchResult search_root_parallel(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                                  int jobs, const PartialPath& prefix = {});

/// Every node's N equals its children's N plus the evaluations ending there.
bool visit_conservation_holds(const SearchNode& node);

/// Graphviz description; nodes labeled `id/N/Q`, edges labeled with P.
std::string tree_to_dot(const SearchNode& root, int max_depth = kNumPhases);

/// Output chain: [{phase, technique, Q, N, reward}], reward of each prefix.
Json chain_to_json(const SearchResult& result, const RewardContext& ctx, const PartialPath& prefix = {});

struct TrainingRecord {
  Phase phase = Phase::recon;
  PartialPath prefix;
  std::vector<std::string> candidates;
  std::vector<double> pi_target;
  std::string selected;
  double v_target = 0.0;
};

/// Self-play episodes: one search per phase decision, the move sampled from
/// the root visit distribution, V_target from rollouts of the chosen state.
std::vector<TrainingRecord> generate_training_data(const RewardContext& ctx, const Evaluator& evaluator,
                                                   const SearchConfig& cfg, const RolloutConfig& rollout,
                                                   int num_episodes);

Json training_data_to_json(std::span<const TrainingRecord> records, const EmbeddingStore& store);
/// Rebuilds training examples; candidates are resolved through `store`.
std::vector<TrainingExample> training_examples_from_json(const Json& j, const EmbeddingStore& store);

}  // namespace killchain
