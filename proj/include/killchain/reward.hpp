#pragma once

#include <string>
#include <vector>

#include "killchain/catalog.hpp"
#include "killchain/embedding_store.hpp"
#include "killchain/kernel.hpp"

namespace killchain {

struct PathStep {
  Phase phase = Phase::recon;
  std::string technique;

  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// A chain prefix (t_phi1, ..., t_phim), m >= 1 for every scoring function.
using PartialPath = std::vector<PathStep>;

/// Checks that phases strictly increase and every technique sits in its
/// step's phase. With `from_recon`, the first step must be recon and phases
/// must be consecutive.
void validate_path(const PartialPath& path, const Catalog& catalog, bool from_recon = false);

struct RewardWeights {
  double rel = 1.0;
  double coh = 1.0;
  double trans = 1.0;
  double cov = 1.0;
  double stealth = 1.0;
  double det = 1.0;
  double mit = 1.0;
  double prior = 1.0;

  /// All nonnegative and finite.
  void validate() const;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

struct RewardBreakdown {
  double rel = 0.0;
  double coh = 0.0;
  double trans = 0.0;
  double log_trans = 0.0;  // diagnostics only; the total uses `trans`
  double cov = 0.0;
  double stealth = 0.0;
  double det_pen = 0.0;
  double mit_pen = 0.0;
  double prior_pen = 0.0;
  double total = 0.0;

  Json to_json() const;
};

/// Everything the reward reads. All references must outlive the context.
struct RewardContext {
  const Catalog& catalog;
  const EmbeddingStore& store;
  const TransitionKernel& kernel;
  const PhasePriors& priors;
  RewardWeights weights;
};

double logistic(double z);

double relevance(const PartialPath& path, const EmbeddingStore& store);
/// 1 for a single step.
double cohesion(const PartialPath& path, const EmbeddingStore& store);
/// Product of kernel probabilities; 1 for a single step.
double transition_plausibility(const PartialPath& path, const TransitionKernel& kernel);
double coverage(const PartialPath& path, const PhasePriors& priors);
double stealth(const PartialPath& path, const Catalog& catalog);
double detection_penalty(const PartialPath& path, const Catalog& catalog);
double mitigation_penalty(const PartialPath& path, const Catalog& catalog);
double prior_penalty(const PartialPath& path, const PhasePriors& priors);

/// Weighted signed sum of the component fields of `c` (its `total` is ignored).
double combine(const RewardBreakdown& c, const RewardWeights& w);

/// R(p) = R+(p) - R-(p) with every component recorded.
RewardBreakdown total_reward(const PartialPath& path, const RewardContext& ctx);

}  // namespace killchain
