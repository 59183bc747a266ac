#include "killchain/config.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "killchain/error.hpp"

namespace killchain {

void EngineConfig::validate() const {
  reward_weights.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be finite and nonnegative");
  if (!(prior_temperature >= 0.0) || !std::isfinite(prior_temperature))
    throw ValidationError("prior_temperature must be finite and nonnegative");
  rollout.validate();
  search.validate();
  pvn.validate(true);
}

namespace {

using Setter = std::function<void(const Json&)>;

// Applies `fields` to the members of object `j`, rejecting unknown keys.
void apply(const Json& j, const std::string& scope, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) throw ValidationError((scope.empty() ? std::string("config") : scope) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string key = scope.empty() ? it.key() : scope + "." + it.key();
    auto f = fields.find(it.key());
    if (f == fields.end()) throw ValidationError("unknown config key " + key);
    try {
      f->second(*it);
    } catch (const Json::exception&) {
      throw ValidationError("config key " + key + " has the wrong type");
    }
  }
}

template <class T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

std::string evaluator_name(EvaluatorKind k) { return k == EvaluatorKind::heuristic ? "heuristic" : "trained-pvn"; }
std::string leaf_value_name(LeafValue v) { return v == LeafValue::evaluator ? "evaluator" : "reward-to-go"; }

}  // namespace

EngineConfig config_from_json(const Json& j) {
  EngineConfig cfg;
  RewardWeights& w = cfg.reward_weights;
  RolloutConfig& r = cfg.rollout;
  SearchConfig& s = cfg.search;
  apply(j, "",
        {{"reward_weights",
          [&](const Json& v) {
            apply(v, "reward_weights",
                  {{"rel", set(w.rel)},
                   {"coh", set(w.coh)},
                   {"trans", set(w.trans)},
                   {"cov", set(w.cov)},
                   {"stealth", set(w.stealth)},
                   {"det", set(w.det)},
                   {"mit", set(w.mit)},
                   {"prior", set(w.prior)}});
          }},
         {"alpha", set(cfg.alpha)},
         {"prior_temperature", set(cfg.prior_temperature)},
         {"rollout",
          [&](const Json& v) {
            apply(v, "rollout",
                  {{"gamma", set(r.gamma)},
                   {"num_rollouts", set(r.num_rollouts)},
                   {"horizon", set(r.horizon)},
                   {"rng_seed", set(r.rng_seed)}});
          }},
         {"search",
          [&](const Json& v) {
            apply(v, "search",
                  {{"simulations", set(s.simulations)},
                   {"c_puct", set(s.c_puct)},
                   {"beta1", set(s.beta1)},
                   {"beta2", set(s.beta2)},
                   {"rng_seed", set(s.rng_seed)},
                   {"evaluator",
                    [&](const Json& e) {
                      std::string name = e.get<std::string>();
                      if (name == "heuristic") s.evaluator = EvaluatorKind::heuristic;
                      else if (name == "trained-pvn") s.evaluator = EvaluatorKind::trained_pvn;
                      else throw ValidationError("search.evaluator must be 'heuristic' or 'trained-pvn'");
                    }},
                   {"leaf_value",
                    [&](const Json& e) {
                      std::string name = e.get<std::string>();
                      if (name == "evaluator") s.leaf_value = LeafValue::evaluator;
                      else if (name == "reward-to-go") s.leaf_value = LeafValue::reward_to_go;
                      else throw ValidationError("search.leaf_value must be 'evaluator' or 'reward-to-go'");
                    }},
                   {"dirichlet_alpha", set(s.dirichlet_alpha)},
                   {"dirichlet_epsilon", set(s.dirichlet_epsilon)}});
          }},
         {"pvn", [&](const Json& v) { cfg.pvn = pvn_config_from_json(v); }}});
  cfg.validate();
  return cfg;
}

Json config_to_json(const EngineConfig& cfg) {
  const RewardWeights& w = cfg.reward_weights;
  const RolloutConfig& r = cfg.rollout;
  const SearchConfig& s = cfg.search;
  return {{"reward_weights",
           {{"rel", w.rel},
            {"coh", w.coh},
            {"trans", w.trans},
            {"cov", w.cov},
            {"stealth", w.stealth},
            {"det", w.det},
            {"mit", w.mit},
            {"prior", w.prior}}},
          {"alpha", cfg.alpha},
          {"prior_temperature", cfg.prior_temperature},
          {"rollout",
           {{"gamma", r.gamma}, {"num_rollouts", r.num_rollouts}, {"horizon", r.horizon}, {"rng_seed", r.rng_seed}}},
          {"search",
           {{"simulations", s.simulations},
            {"c_puct", s.c_puct},
            {"beta1", s.beta1},
            {"beta2", s.beta2},
            {"rng_seed", s.rng_seed},
            {"evaluator", evaluator_name(s.evaluator)},
            {"leaf_value", leaf_value_name(s.leaf_value)},
            {"dirichlet_alpha", s.dirichlet_alpha},
            {"dirichlet_epsilon", s.dirichlet_epsilon}}},
          {"pvn", pvn_config_to_json(cfg.pvn)}};
}

EngineConfig load_config(const std::filesystem::path& path) {
  return config_from_json(parse_json(read_text_file(path), path.string()));
}

}  // namespace killchain
