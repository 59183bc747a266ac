#include "killchain/reward.hpp"

#include <cmath>

#include "killchain/error.hpp"

namespace killchain {

void validate_path(const PartialPath& path, const Catalog& catalog, bool from_recon) {
  if (path.empty()) throw ValidationError("path must contain at least one step");
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Technique& t = catalog.at(path[i].technique);
    if (t.phase != path[i].phase)
      throw ValidationError("technique " + t.id + " is not in phase " + std::string(phase_name(path[i].phase)));
    if (i > 0) {
      int prev = ordinal(path[i - 1].phase);
      int cur = ordinal(path[i].phase);
      if (cur <= prev || (from_recon && cur != prev + 1))
        throw ValidationError("path phases must increase step by step");
    }
  }
  if (from_recon && path.front().phase != Phase::recon) throw ValidationError("chain must start at recon");
}

void RewardWeights::validate() const {
  for (double w : {rel, coh, trans, cov, stealth, det, mit, prior})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("reward weights must be finite and nonnegative");
}

Json RewardBreakdown::to_json() const {
  return {{"rel", rel},         {"coh", coh},         {"trans", trans},         {"log_trans", log_trans},
          {"cov", cov},         {"stealth", stealth}, {"det_pen", det_pen},     {"mit_pen", mit_pen},
          {"prior_pen", prior_pen}, {"total", total}};
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace {

void require_nonempty(const PartialPath& path) {
  if (path.empty()) throw ValidationError("cannot score an empty path");
}

template <class F>
double mean_over_steps(const PartialPath& path, F&& f) {
  require_nonempty(path);
  double sum = 0.0;
  for (const PathStep& s : path) sum += f(s);
  return sum / static_cast<double>(path.size());
}

}  // namespace

double relevance(const PartialPath& path, const EmbeddingStore& store) {
  const Embedding& c = store.context();
  return mean_over_steps(path, [&](const PathStep& s) { return cosine(c, store.at(s.technique)); });
}

double cohesion(const PartialPath& path, const EmbeddingStore& store) {
  require_nonempty(path);
  if (path.size() == 1) return 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    sum += cosine(store.at(path[i].technique), store.at(path[i + 1].technique));
  return sum / static_cast<double>(path.size() - 1);
}

double transition_plausibility(const PartialPath& path, const TransitionKernel& kernel) {
  require_nonempty(path);
  double prod = 1.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) prod *= kernel.probability(path[i].technique, path[i + 1].technique);
  return prod;
}

double coverage(const PartialPath& path, const PhasePriors& priors) {
  return mean_over_steps(path, [&](const PathStep& s) { return priors.prior(s.phase, s.technique); });
}

double stealth(const PartialPath& path, const Catalog& catalog) {
  return 1.0 - mean_over_steps(path, [&](const PathStep& s) { return logistic(catalog.at(s.technique).detection_score); });
}

double detection_penalty(const PartialPath& path, const Catalog& catalog) {
  return mean_over_steps(path, [&](const PathStep& s) { return catalog.at(s.technique).detection_coverage; });
}

double mitigation_penalty(const PartialPath& path, const Catalog& catalog) {
  return mean_over_steps(path, [&](const PathStep& s) { return catalog.at(s.technique).mitigation_score; });
}

double prior_penalty(const PartialPath& path, const PhasePriors& priors) {
  return mean_over_steps(path, [&](const PathStep& s) { return 1.0 - priors.prior(s.phase, s.technique); });
}

double combine(const RewardBreakdown& c, const RewardWeights& w) {
  double positive = w.rel * c.rel + w.coh * c.coh + w.trans * c.trans + w.cov * c.cov + w.stealth * c.stealth;
  double negative = w.det * c.det_pen + w.mit * c.mit_pen + w.prior * c.prior_pen;
  return positive - negative;
}

RewardBreakdown total_reward(const PartialPath& path, const RewardContext& ctx) {
  RewardBreakdown b;
  b.rel = relevance(path, ctx.store);
  b.coh = cohesion(path, ctx.store);
  b.trans = transition_plausibility(path, ctx.kernel);
  b.log_trans = std::log(b.trans);
  b.cov = coverage(path, ctx.priors);
  b.stealth = stealth(path, ctx.catalog);
  b.det_pen = detection_penalty(path, ctx.catalog);
  b.mit_pen = mitigation_penalty(path, ctx.catalog);
  b.prior_pen = prior_penalty(path, ctx.priors);
  b.total = combine(b, ctx.weights);
  return b;
}

}  // namespace killchain
