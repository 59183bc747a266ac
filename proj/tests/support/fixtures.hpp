#pragma once

// Synthetic catalogs, embeddings and brute-force oracles shared by the test
// binaries. Nothing here calls into the search or rollout code paths.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "killchain/catalog.hpp"
#include "killchain/embedding_store.hpp"
#include "killchain/kernel.hpp"
#include "killchain/random.hpp"
#include "killchain/reward.hpp"

namespace killchain::testing {

inline std::string data_path(const std::string& name) { return std::string(KILLCHAIN_TEST_DATA) + "/" + name; }

inline Technique make_technique(std::string id, Phase phase, double detection = 0.5, double mitigation = 0.5,
                                double coverage = 0.5) {
  Technique t;
  t.id = std::move(id);
  t.name = t.id;
  t.phase = phase;
  t.detection_score = detection;
  t.mitigation_score = mitigation;
  t.detection_coverage = coverage;
  return t;
}

inline std::string synthetic_id(int phase, int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "T1%d%02d", phase, k);
  return buf;
}

inline double gaussian(Rng& rng) {
  // Box-Muller on the portable uniform
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::vector<double> random_vector(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = gaussian(rng);
  return v;
}

struct Instance {
  Catalog catalog;
  EmbeddingStore store;
};

/// 7 phases with a uniformly drawn count in [min_per_phase, max_per_phase]
/// techniques each, random unit embeddings, random scores in [0,1].
inline Instance random_instance(std::uint64_t seed, int min_per_phase, int max_per_phase, int dim) {
  Rng rng(stream_seed(seed, 0xca7a1095ULL));
  std::vector<Technique> techniques;
  std::vector<Embedding> vectors;
  for (Phase p : kAllPhases) {
    int count = min_per_phase + static_cast<int>(uniform01(rng) * (max_per_phase - min_per_phase + 1));
    for (int k = 0; k < count; ++k) {
      Technique t;
      t.id = synthetic_id(ordinal(p), k);
      t.name = "synthetic " + t.id;
      t.phase = p;
      t.description = "synthetic technique";
      t.detection_score = uniform01(rng);
      t.mitigation_score = uniform01(rng);
      t.detection_coverage = uniform01(rng);
      techniques.push_back(t);
      vectors.push_back({t.id, random_vector(rng, dim)});
    }
  }
  Embedding context{std::string(kContextId), random_vector(rng, dim)};
  return {Catalog(std::move(techniques)), EmbeddingStore(std::move(vectors), std::move(context))};
}

/// One technique per phase; every transition is forced.
inline Instance singleton_chain(int dim = 4, std::uint64_t seed = 7) {
  return random_instance(seed, 1, 1, dim);
}

/// Every recon-to-objectives chain, in lexicographic catalog order.
inline std::vector<PartialPath> all_full_paths(const Catalog& catalog) {
  std::vector<PartialPath> out{PartialPath{}};
  for (Phase p : kAllPhases) {
    std::vector<PartialPath> next;
    for (const PartialPath& prefix : out)
      for (std::size_t i : catalog.phase_indices(p)) {
        PartialPath ext = prefix;
        ext.push_back({p, catalog[i].id});
        next.push_back(std::move(ext));
      }
    out = std::move(next);
  }
  return out;
}

struct OracleResult {
  PartialPath best;
  double best_total = -std::numeric_limits<double>::infinity();
  double runner_up_total = -std::numeric_limits<double>::infinity();
};

/// Exhaustive argmax of total_reward over all full chains.
inline OracleResult brute_force_argmax(const RewardContext& ctx) {
  OracleResult r;
  for (const PartialPath& p : all_full_paths(ctx.catalog)) {
    double v = total_reward(p, ctx).total;
    if (v > r.best_total) {
      r.runner_up_total = r.best_total;
      r.best_total = v;
      r.best = p;
    } else if (v > r.runner_up_total) {
      r.runner_up_total = v;
    }
  }
  return r;
}

/// Catalog, store, priors and kernel kept together so the reward context
/// can reference them. Not copyable.
struct World {
  Catalog catalog;
  EmbeddingStore store;
  PhasePriors priors;
  TransitionKernel kernel;
  RewardContext ctx;

  World(Instance inst, double prior_temperature = kDefaultPriorTemperature, double alpha = kDefaultAlpha,
        RewardWeights weights = {})
      : catalog(std::move(inst.catalog)),
        store(std::move(inst.store)),
        priors(compute_phase_priors(store, catalog, prior_temperature)),
        kernel(build_kernel(catalog, store, alpha)),
        ctx{catalog, store, kernel, priors, weights} {}
  World(const World&) = delete;
  World& operator=(const World&) = delete;
};

}  // namespace killchain::testing
