#include "killchain/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "killchain/error.hpp"
#include "killchain/random.hpp"

namespace killchain {

void SearchConfig::validate() const {
  if (simulations < 1) throw ValidationError("search simulations must be positive");
  if (!(c_puct >= 0.0) || !std::isfinite(c_puct)) throw ValidationError("c_puct must be nonnegative");
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0) || !(beta1 + beta2 > 0.0))
    throw ValidationError("blend weights must be nonnegative with a positive sum");
  if (!(dirichlet_alpha > 0.0)) throw ValidationError("dirichlet_alpha must be positive");
  if (!(dirichlet_epsilon >= 0.0 && dirichlet_epsilon <= 1.0))
    throw ValidationError("dirichlet_epsilon must lie in [0,1]");
}

HeuristicEvaluator::HeuristicEvaluator(const Catalog& catalog, const PhasePriors& priors,
                                       std::vector<double> state_values)
    : catalog_(catalog), priors_(priors), values_(std::move(state_values)) {
  if (values_.size() != catalog_.size()) throw ValidationError("state values must cover the catalog");
}

HeuristicEvaluator HeuristicEvaluator::from_rollouts(const RewardContext& ctx, const RolloutConfig& rollout) {
  return HeuristicEvaluator(ctx.catalog, ctx.priors,
                            state_values(ctx.kernel, ctx.catalog, rollout, incremental_reward(ctx)));
}

double HeuristicEvaluator::state_value(std::string_view id) const { return values_[catalog_.checked_index(id)]; }

Evaluation HeuristicEvaluator::evaluate(const PartialPath&, Phase phase,
                                        std::span<const std::string> candidates) const {
  PvnOutput out = heuristic_evaluate(priors_, phase, candidates, [this](std::string_view id) { return state_value(id); });
  return {std::move(out.policy), out.value};
}

NetworkEvaluator::NetworkEvaluator(const PvnWeights& weights, const EmbeddingStore& store)
    : weights_(weights), store_(store) {
  if (static_cast<std::size_t>(weights.config.input_dim) != store.dim())
    throw ValidationError("network input_dim " + std::to_string(weights.config.input_dim) +
                          " does not match embedding dimension " + std::to_string(store.dim()));
}

Evaluation NetworkEvaluator::evaluate(const PartialPath&, Phase, std::span<const std::string> candidates) const {
  PvnOutput out = forward(weights_, make_input(store_, candidates));
  return {std::move(out.policy), out.value};
}

const SearchNode* SearchNode::child(std::string_view id) const {
  for (const SearchNode& c : children)
    if (c.state && c.state->technique == id) return &c;
  return nullptr;
}

double puct_score(const SearchNode& child, int parent_visits, double c_puct) {
  double q = child.visit_count > 0 ? child.mean_value : 0.0;
  return q + c_puct * child.prior * std::sqrt(static_cast<double>(parent_visits)) / (1.0 + child.visit_count);
}

std::vector<double> blend_priors(std::span<const double> pi, std::span<const double> p_mdp, double beta1,
                                 double beta2) {
  if (pi.size() != p_mdp.size())
    throw ValidationError("cannot blend priors of lengths " + std::to_string(pi.size()) + " and " +
                          std::to_string(p_mdp.size()));
  std::vector<double> logits(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i)
    logits[i] = beta1 * std::log(std::max(pi[i], kProbEpsilon)) + beta2 * std::log(std::max(p_mdp[i], kProbEpsilon));
  return softmax(logits);
}

void backpropagate(std::span<SearchNode* const> path, double leaf_value) {
  for (SearchNode* node : path) {
    node->visit_count += 1;
    node->total_value += leaf_value;
    node->mean_value = node->total_value / node->visit_count;
  }
}

Json SearchTrace::to_json() const {
  Json sims = Json::array();
  for (const SimulationRecord& r : simulations) {
    Json rec = {{"tree", r.tree}, {"index", r.index}, {"edges", r.edges}, {"terminal", r.terminal}, {"value", r.value}};
    if (!r.terminal)
      rec["evaluation"] = {{"candidates", r.candidates},
                           {"policy", r.policy},
                           {"blended_priors", r.blended_priors},
                           {"value", r.evaluator_value}};
    sims.push_back(std::move(rec));
  }
  return {{"simulations", sims}};
}

namespace {

Phase phase_after(const PartialPath& path) {
  if (path.empty()) return Phase::recon;
  return *next_phase(path.back().phase);
}

struct Expansion {
  std::vector<std::string> candidates;
  Evaluation eval;
  std::vector<double> blended;
};

Expansion expand_state(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                       const PartialPath& path) {
  Expansion x;
  Phase phase = phase_after(path);
  x.candidates = ids_in_phase(ctx.catalog, phase);
  x.eval = evaluator.evaluate(path, phase, x.candidates);
  if (x.eval.policy.size() != x.candidates.size())
    throw ValidationError("evaluator returned " + std::to_string(x.eval.policy.size()) + " probabilities for " +
                          std::to_string(x.candidates.size()) + " candidates");
  std::vector<double> p_mdp;
  if (path.empty())
    p_mdp.assign(x.candidates.size(), 1.0 / static_cast<double>(x.candidates.size()));
  else
    p_mdp = ctx.kernel.row(path.back().technique).probs;
  x.blended = blend_priors(x.eval.policy, p_mdp, cfg.beta1, cfg.beta2);
  return x;
}

void attach_children(SearchNode& node, Phase phase, const Expansion& x) {
  node.children.clear();
  node.children.reserve(x.candidates.size());
  for (std::size_t i = 0; i < x.candidates.size(); ++i) {
    SearchNode child;
    child.state = PathStep{phase, x.candidates[i]};
    child.prior = x.blended[i];
    node.children.push_back(std::move(child));
  }
  std::sort(node.children.begin(), node.children.end(),
            [](const SearchNode& a, const SearchNode& b) { return a.state->technique < b.state->technique; });
  node.expanded = true;
}

void add_root_noise(SearchNode& root, double alpha, double epsilon, Rng& rng) {
  if (epsilon <= 0.0 || root.children.empty()) return;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> noise(root.children.size());
  double sum = 0.0;
  for (double& x : noise) sum += x = gamma(rng);
  for (std::size_t i = 0; i < noise.size(); ++i)
    root.children[i].prior = (1.0 - epsilon) * root.children[i].prior + epsilon * noise[i] / sum;
}

// Index of the max-key child; ties resolve to the lowest technique id since
// children are sorted.
template <class Key>
std::size_t argmax_child(const SearchNode& node, Key&& key) {
  std::size_t best = 0;
  double best_key = key(node.children[0]);
  for (std::size_t i = 1; i < node.children.size(); ++i) {
    double k = key(node.children[i]);
    if (k > best_key) {
      best_key = k;
      best = i;
    }
  }
  return best;
}

bool is_terminal_state(const PartialPath& path) { return !path.empty() && is_terminal(path.back().phase); }

struct TreeRun {
  SearchNode root;
  SearchTrace trace;
};

TreeRun run_tree(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                 const PartialPath& prefix, int simulations, std::uint64_t seed, int tree_index) {
  TreeRun run;
  if (!prefix.empty()) run.root.state = prefix.back();
  Rng rng(seed);
  run.trace.simulations.reserve(static_cast<std::size_t>(simulations));

  std::vector<SearchNode*> nodes;
  for (int k = 0; k < simulations; ++k) {
    SimulationRecord rec;
    rec.tree = tree_index;
    rec.index = k;
    PartialPath path = prefix;
    nodes.assign(1, &run.root);
    SearchNode* node = &run.root;
    while (node->expanded && !node->children.empty()) {
      std::size_t pick = argmax_child(*node, [&](const SearchNode& c) { return puct_score(c, node->visit_count, cfg.c_puct); });
      node = &node->children[pick];
      nodes.push_back(node);
      path.push_back(*node->state);
      rec.edges.push_back(node->state->technique);
    }

    double value;
    if (is_terminal_state(path)) {
      rec.terminal = true;
      value = total_reward(path, ctx).total;
    } else {
      Expansion x = expand_state(ctx, evaluator, cfg, path);
      attach_children(*node, phase_after(path), x);
      if (node == &run.root) add_root_noise(run.root, cfg.dirichlet_alpha, cfg.dirichlet_epsilon, rng);
      rec.evaluator_value = x.eval.value;
      value = x.eval.value;
      if (cfg.leaf_value == LeafValue::reward_to_go && !path.empty()) value += total_reward(path, ctx).total;
      rec.candidates = std::move(x.candidates);
      rec.policy = std::move(x.eval.policy);
      rec.blended_priors = std::move(x.blended);
    }
    rec.value = value;
    node->evaluations += 1;
    backpropagate(nodes, value);
    run.trace.simulations.push_back(std::move(rec));
  }
  return run;
}

// Sums N, W and evaluations over trees; priors are averaged over the trees
// that expanded the parent, so expanded children still sum to one.
SearchNode merge_nodes(const std::vector<const SearchNode*>& sources) {
  SearchNode out;
  out.state = sources.front()->state;
  std::vector<const SearchNode*> expanded;
  for (const SearchNode* s : sources) {
    out.visit_count += s->visit_count;
    out.total_value += s->total_value;
    out.evaluations += s->evaluations;
    out.prior += s->prior;
    if (s->expanded) expanded.push_back(s);
  }
  out.prior /= static_cast<double>(sources.size());
  out.mean_value = out.visit_count > 0 ? out.total_value / out.visit_count : 0.0;
  if (expanded.empty()) return out;
  out.expanded = true;
  const std::size_t n = expanded.front()->children.size();
  out.children.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<const SearchNode*> kids;
    for (const SearchNode* s : expanded) kids.push_back(&s->children[i]);
    out.children.push_back(merge_nodes(kids));
  }
  return out;
}

// Most-visited descent; unexpanded non-terminal states are completed by the
// highest blended prior.
PartialPath extract_path(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                         const SearchNode& root, const PartialPath& prefix) {
  PartialPath path = prefix;
  const SearchNode* node = &root;
  while (node && !node->children.empty()) {
    node = &node->children[argmax_child(*node, [](const SearchNode& c) { return static_cast<double>(c.visit_count); })];
    path.push_back(*node->state);
  }
  while (!is_terminal_state(path)) {
    Expansion x = expand_state(ctx, evaluator, cfg, path);
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.candidates.size(); ++i)
      if (x.blended[i] > x.blended[best] || (x.blended[i] == x.blended[best] && x.candidates[i] < x.candidates[best]))
        best = i;
    path.push_back({phase_after(path), x.candidates[best]});
  }
  return path;
}

SearchResult finish(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                    const PartialPath& prefix, SearchNode root, SearchTrace trace) {
  SearchResult r;
  r.best_path = extract_path(ctx, evaluator, cfg, root, prefix);
  int total = 0;
  for (const SearchNode& c : root.children) total += c.visit_count;
  for (const SearchNode& c : root.children) {
    r.root_candidates.push_back(c.state->technique);
    r.pi_target.push_back(total > 0 ? static_cast<double>(c.visit_count) / total
                                    : 1.0 / static_cast<double>(root.children.size()));
  }
  r.root = std::move(root);
  r.trace = std::move(trace);
  return r;
}

void check_prefix(const RewardContext& ctx, const PartialPath& prefix) {
  if (!prefix.empty()) validate_path(prefix, ctx.catalog, true);
}

}  // namespace

SearchResult search(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                    const PartialPath& prefix) {
  return search_root_parallel(ctx, evaluator, cfg, 1, prefix);
}

SearchResult search_root_parallel(const RewardContext& ctx, const Evaluator& evaluator, const SearchConfig& cfg,
                                  int jobs, const PartialPath& prefix) {
  cfg.validate();
  check_prefix(ctx, prefix);
  if (jobs < 1) throw ValidationError("jobs must be positive");
  jobs = std::min(jobs, cfg.simulations);

  std::vector<TreeRun> runs(static_cast<std::size_t>(jobs));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < jobs; ++j) {
    try {
      int sims = cfg.simulations / jobs + (j < cfg.simulations % jobs ? 1 : 0);
      std::uint64_t seed = j == 0 ? cfg.rng_seed : stream_seed(cfg.rng_seed, static_cast<std::uint64_t>(j));
      runs[static_cast<std::size_t>(j)] = run_tree(ctx, evaluator, cfg, prefix, sims, seed, j);
    } catch (...) {
#pragma omp critical(killchain_search_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  if (jobs == 1) return finish(ctx, evaluator, cfg, prefix, std::move(runs[0].root), std::move(runs[0].trace));
  std::vector<const SearchNode*> roots;
  SearchTrace trace;
  for (const TreeRun& r : runs) {
    roots.push_back(&r.root);
    trace.simulations.insert(trace.simulations.end(), r.trace.simulations.begin(), r.trace.simulations.end());
  }
  SearchNode merged = merge_nodes(roots);
  merged.prior = 0.0;
  return finish(ctx, evaluator, cfg, prefix, std::move(merged), std::move(trace));
}

bool visit_conservation_holds(const SearchNode& node) {
  int sum = node.evaluations;
  for (const SearchNode& c : node.children) {
    if (!visit_conservation_holds(c)) return false;
    sum += c.visit_count;
  }
  return sum == node.visit_count;
}

namespace {

void dot_node(std::ostringstream& out, const SearchNode& node, const std::string& name, int depth, int max_depth) {
  std::string label = node.state ? node.state->technique : std::string("root");
  out << "  " << name << " [label=\"" << label << "/" << node.visit_count << "/" << node.mean_value << "\"];\n";
  if (depth >= max_depth) return;
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    const SearchNode& c = node.children[i];
    if (c.visit_count == 0) continue;
    std::string child = name + "_" + std::to_string(i);
    dot_node(out, c, child, depth + 1, max_depth);
    out << "  " << name << " -> " << child << " [label=\"" << c.prior << "\"];\n";
  }
}

}  // namespace

std::string tree_to_dot(const SearchNode& root, int max_depth) {
  std::ostringstream out;
  out.precision(4);
  out << "digraph search {\n";
  dot_node(out, root, "n", 0, max_depth);
  out << "}\n";
  return out.str();
}

Json chain_to_json(const SearchResult& result, const RewardContext& ctx, const PartialPath& prefix) {
  Json out = Json::array();
  PartialPath partial;
  const SearchNode* node = &result.root;
  for (std::size_t i = 0; i < result.best_path.size(); ++i) {
    const PathStep& step = result.best_path[i];
    partial.push_back(step);
    int n = 0;
    double q = 0.0;
    if (i >= prefix.size()) {
      node = node ? node->child(step.technique) : nullptr;
      if (node) {
        n = node->visit_count;
        q = node->mean_value;
      }
    }
    out.push_back({{"phase", std::string(phase_name(step.phase))},
                   {"technique", step.technique},
                   {"Q", q},
                   {"N", n},
                   {"reward", total_reward(partial, ctx).to_json()}});
  }
  return out;
}

std::vector<TrainingRecord> generate_training_data(const RewardContext& ctx, const Evaluator& evaluator,
                                                   const SearchConfig& cfg, const RolloutConfig& rollout,
                                                   int num_episodes) {
  cfg.validate();
  rollout.validate();
  if (num_episodes < 0) throw ValidationError("num_episodes must be nonnegative");
  std::vector<TrainingRecord> out;
  StepReward reward = incremental_reward(ctx);
  for (int e = 0; e < num_episodes; ++e) {
    Rng rng(stream_seed(cfg.rng_seed, 0x5e1f0000ULL + static_cast<std::uint64_t>(e)));
    PartialPath prefix;
    while (!is_terminal_state(prefix)) {
      SearchConfig step_cfg = cfg;
      step_cfg.rng_seed = stream_seed(cfg.rng_seed, static_cast<std::uint64_t>(e) * kNumPhases + prefix.size());
      SearchResult r = search(ctx, evaluator, step_cfg, prefix);

      double u = uniform01(rng);
      std::size_t pick = r.pi_target.size() - 1;
      double cdf = 0.0;
      for (std::size_t k = 0; k < r.pi_target.size(); ++k) {
        cdf += r.pi_target[k];
        if (u < cdf) {
          pick = k;
          break;
        }
      }
      TrainingRecord rec;
      rec.phase = phase_after(prefix);
      rec.prefix = prefix;
      rec.candidates = r.root_candidates;
      rec.pi_target = r.pi_target;
      rec.selected = r.root_candidates[pick];
      rec.v_target = rollout_value(ctx.kernel, {rec.phase, rec.selected}, rollout, reward);
      prefix.push_back({rec.phase, rec.selected});
      out.push_back(std::move(rec));
    }
  }
  return out;
}

Json training_data_to_json(std::span<const TrainingRecord> records, const EmbeddingStore& store) {
  Json examples = Json::array();
  for (const TrainingRecord& r : records) {
    Json prefix = Json::array();
    for (const PathStep& s : r.prefix) prefix.push_back(s.technique);
    examples.push_back({{"phase", std::string(phase_name(r.phase))},
                        {"prefix", prefix},
                        {"candidates", r.candidates},
                        {"pi_target", r.pi_target},
                        {"selected", r.selected},
                        {"v_target", r.v_target}});
  }
  return {{"context", store.context().values}, {"examples", examples}};
}

std::vector<TrainingExample> training_examples_from_json(const Json& j, const EmbeddingStore& store) {
  if (!j.is_object() || !j.contains("examples") || !j["examples"].is_array())
    throw ValidationError("training data must be an object with an \"examples\" array");
  Eigen::VectorXd context;
  try {
    if (j.contains("context")) {
      auto v = j["context"].get<std::vector<double>>();
      context = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else {
      const Embedding& c = store.context();
      context = Eigen::Map<const Eigen::VectorXd>(c.values.data(), static_cast<Eigen::Index>(c.dim()));
    }
  } catch (const Json::exception&) {
    throw ValidationError("training data context must be a numeric array");
  }
  if (static_cast<std::size_t>(context.size()) != store.dim())
    throw ValidationError("training data context dimension does not match the embeddings");

  std::vector<TrainingExample> out;
  for (const Json& e : j["examples"]) {
    TrainingExample ex;
    try {
      auto ids = e.at("candidates").get<std::vector<std::string>>();
      ex.input = make_input(store, ids);
      ex.input.context = context;
      ex.pi_target = e.at("pi_target").get<std::vector<double>>();
      ex.v_target = e.at("v_target").get<double>();
    } catch (const Json::exception&) {
      throw ValidationError("malformed training example " + std::to_string(out.size()));
    }
    if (ex.pi_target.size() != static_cast<std::size_t>(ex.input.candidates.rows()))
      throw ValidationError("training example " + std::to_string(out.size()) + ": pi_target length mismatch");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace killchain
