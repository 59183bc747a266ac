// killchain: command-line front end for kernel construction, search,
// training-data generation, network training and evaluation.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "killchain/catalog.hpp"
#include "killchain/config.hpp"
#include "killchain/embedding_store.hpp"
#include "killchain/error.hpp"
#include "killchain/evaluation.hpp"
#include "killchain/io.hpp"
#include "killchain/kernel.hpp"
#include "killchain/mcts.hpp"
#include "killchain/pvn.hpp"

using namespace killchain;

namespace {

struct CommonOptions {
  std::string catalog;
  std::string embeddings;
  std::string config;
  std::string priors;
  std::string weights;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string trace;
  int jobs = 1;
};

void log(const std::string& msg) { std::cerr << "killchain: " << msg << '\n'; }

EngineConfig effective_config(const CommonOptions& o) {
  EngineConfig cfg = o.config.empty() ? EngineConfig{} : load_config(o.config);
  if (o.seed) {
    cfg.search.rng_seed = *o.seed;
    cfg.rollout.rng_seed = *o.seed;
    cfg.pvn.init_seed = *o.seed;
  }
  cfg.validate();
  return cfg;
}

// The echo sits next to the primary output so every run can be replayed.
void write_config_echo(const EngineConfig& cfg, const std::string& out) {
  write_text_file(out + ".config.json", dump_json(config_to_json(cfg)));
}

/// Everything the search-side commands share, built once from the inputs.
struct Pipeline {
  EngineConfig cfg;
  Catalog catalog;
  EmbeddingStore store;
  PhasePriors priors;
  TransitionKernel kernel;
  RewardContext ctx;

  Pipeline(EngineConfig c, Catalog cat, EmbeddingStore s, const std::string& priors_path)
      : cfg(std::move(c)),
        catalog(std::move(cat)),
        store(std::move(s)),
        priors(priors_path.empty() ? compute_phase_priors(store, catalog, cfg.prior_temperature)
                                   : load_prior_override(priors_path, catalog)),
        kernel(build_kernel(catalog, store, cfg.alpha)),
        ctx{catalog, store, kernel, priors, cfg.reward_weights} {}
};

std::unique_ptr<Pipeline> make_pipeline(const CommonOptions& o) {
  EngineConfig cfg = effective_config(o);
  Catalog catalog = load_catalog(o.catalog);
  EmbeddingStore store = load_embeddings(o.embeddings);
  store.require_catalog(catalog);
  return std::make_unique<Pipeline>(std::move(cfg), std::move(catalog), std::move(store), o.priors);
}

PvnWeights initial_weights(const EngineConfig& cfg, const EmbeddingStore& store, const std::string& path) {
  if (!path.empty()) return load_weights(path);
  PvnConfig pc = cfg.pvn;
  if (pc.input_dim == 0) pc.input_dim = static_cast<int>(store.dim());
  return init_weights(pc);
}

/// Evaluator selected by the config; the network needs --weights.
struct EvaluatorHolder {
  std::optional<PvnWeights> weights;
  std::unique_ptr<Evaluator> evaluator;
};

EvaluatorHolder make_evaluator(const Pipeline& p, const std::string& weights_path) {
  EvaluatorHolder h;
  if (p.cfg.search.evaluator == EvaluatorKind::trained_pvn) {
    if (weights_path.empty()) throw ValidationError("evaluator \"trained-pvn\" requires --weights");
    h.weights = load_weights(weights_path);
    h.evaluator = std::make_unique<NetworkEvaluator>(*h.weights, p.store);
  } else {
    h.evaluator = std::make_unique<HeuristicEvaluator>(HeuristicEvaluator::from_rollouts(p.ctx, p.cfg.rollout));
  }
  return h;
}

int cmd_kernel(const CommonOptions& o) {
  auto p = make_pipeline(o);
  write_text_file(o.out, dump_json(p->kernel.to_json()));
  write_config_echo(p->cfg, o.out);
  log("kernel over " + std::to_string(p->catalog.size()) + " techniques written to " + o.out);
  return 0;
}

int cmd_infer(const CommonOptions& o) {
  auto p = make_pipeline(o);
  EvaluatorHolder h = make_evaluator(*p, o.weights);
  SearchResult result = search_root_parallel(p->ctx, *h.evaluator, p->cfg.search, o.jobs);
  write_text_file(o.out, dump_json(chain_to_json(result, p->ctx)));
  if (!o.trace.empty()) {
    write_text_file(o.trace, dump_json(result.trace.to_json()));
    write_text_file(o.trace + ".dot", tree_to_dot(result.root));
  }
  write_config_echo(p->cfg, o.out);
  log("chain total reward " + std::to_string(total_reward(result.best_path, p->ctx).total));
  return 0;
}

int cmd_rollout_data(const CommonOptions& o, int episodes) {
  auto p = make_pipeline(o);
  EvaluatorHolder h = make_evaluator(*p, o.weights);
  SearchConfig search = p->cfg.search;
  auto records = generate_training_data(p->ctx, *h.evaluator, search, p->cfg.rollout, episodes);
  write_text_file(o.out, dump_json(training_data_to_json(records, p->store)));
  write_config_echo(p->cfg, o.out);
  log(std::to_string(records.size()) + " training examples written to " + o.out);
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& data_path, int epochs, int batch_size) {
  EngineConfig cfg = effective_config(o);
  EmbeddingStore store = load_embeddings(o.embeddings);
  auto examples = training_examples_from_json(parse_json(read_text_file(data_path), data_path), store);
  PvnWeights w = initial_weights(cfg, store, o.weights);
  PvnConfig train_cfg = w.config;
  train_cfg.learning_rate = cfg.pvn.learning_rate;
  train_cfg.lambda_v = cfg.pvn.lambda_v;
  train_cfg.policy_loss = cfg.pvn.policy_loss;
  if (epochs > 0) w.config.policy_loss = cfg.pvn.policy_loss;

  std::span<const TrainingExample> all(examples);
  for (int epoch = 0; epoch < epochs && !all.empty(); ++epoch) {
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < all.size(); start += static_cast<std::size_t>(batch_size)) {
      auto batch = all.subspan(start, std::min(all.size() - start, static_cast<std::size_t>(batch_size)));
      TrainStepResult step = train_step(w, batch, train_cfg);
      w = std::move(step.weights);
      total += step.mean_loss;
      ++batches;
    }
    log("epoch " + std::to_string(epoch + 1) + " mean loss " + std::to_string(total / batches));
  }
  save_weights(w, o.out);
  write_config_echo(cfg, o.out);
  return 0;
}

/// Predicted technique ids from either a chain file or a plain id array.
std::vector<std::string> read_predicted(const std::string& path) {
  Json j = parse_json(read_text_file(path), path);
  if (!j.is_array()) throw ValidationError(path + ": expected a chain or an array of technique ids");
  std::vector<std::string> ids;
  for (const Json& e : j) {
    if (e.is_string())
      ids.push_back(e.get<std::string>());
    else if (e.is_object() && e.contains("technique") && e["technique"].is_string())
      ids.push_back(e["technique"].get<std::string>());
    else
      throw ValidationError(path + ": entry " + std::to_string(ids.size()) + " is not a technique id");
  }
  return ids;
}

int cmd_eval_nnba(const CommonOptions& o, const std::string& history_path, const std::string& predicted_path,
                  const std::string& source) {
  EmbeddingStore store = load_embeddings(o.embeddings);
  ActorHistory history = load_actor_history(history_path);
  std::vector<std::string> predicted = read_predicted(predicted_path);
  double score = nnba(predicted, history, store);
  Json j = {{"actor", history.actor}, {"source", source}, {"score", score}};
  std::cout << j.dump() << '\n';
  if (!o.out.empty()) {
    write_text_file(o.out, dump_json(j));
    write_config_echo(effective_config(o), o.out);
  }
  return 0;
}

int cmd_eval_envelope(const CommonOptions& o, const std::string& history_path,
                      const std::vector<std::string>& predicted_specs) {
  EmbeddingStore store = load_embeddings(o.embeddings);
  ActorHistory history = load_actor_history(history_path);
  std::map<std::string, std::vector<std::string>> predicted;
  for (const std::string& spec : predicted_specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError("--predicted expects source=path, got '" + spec + "'");
    predicted[spec.substr(0, eq)] = read_predicted(spec.substr(eq + 1));
  }
  EnvelopeReport report = envelope_report(history, predicted, store);
  write_text_file(o.out + ".csv", report.to_csv());
  write_text_file(o.out + ".json", dump_json(report.to_json()));
  write_config_echo(effective_config(o), o.out);
  log("envelope with " + std::to_string(report.hull_indices.size()) + " hull vertices written to " + o.out +
      ".{csv,json}");
  return 0;
}

void add_inputs(CLI::App* cmd, CommonOptions& o, bool needs_catalog = true) {
  if (needs_catalog) cmd->add_option("--catalog", o.catalog, "technique catalog (JSON)")->required();
  cmd->add_option("--embeddings", o.embeddings, "embedding file (JSON lines)")->required();
  cmd->add_option("--config", o.config, "engine config (JSON); defaults when omitted");
  cmd->add_option("--seed", o.seed, "overrides every seed in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kill-chain reconstruction by policy-value guided tree search"};
  app.require_subcommand(1);

  CommonOptions o;
  int episodes = 16;
  int epochs = 10;
  int batch_size = 32;
  std::string data_path, history_path, predicted_path, source = "predicted";
  std::vector<std::string> predicted_specs;

  auto* kernel = app.add_subcommand("kernel", "build the phase-transition kernel");
  add_inputs(kernel, o);
  kernel->add_option("--out", o.out, "kernel JSON")->required();

  auto* infer = app.add_subcommand("infer", "search for the most plausible kill chain");
  add_inputs(infer, o);
  infer->add_option("--priors", o.priors, "phase prior override (JSON)");
  infer->add_option("--weights", o.weights, "trained network weights");
  infer->add_option("--out", o.out, "chain JSON")->required();
  infer->add_option("--trace", o.trace, "search trace JSON; a Graphviz tree goes to <trace>.dot");
  infer->add_option("--jobs", o.jobs, "independent search trees")->check(CLI::PositiveNumber);

  auto* rollout = app.add_subcommand("rollout-data", "generate self-play training data");
  add_inputs(rollout, o);
  rollout->add_option("--priors", o.priors, "phase prior override (JSON)");
  rollout->add_option("--weights", o.weights, "trained network weights");
  rollout->add_option("--episodes", episodes, "self-play episodes")->check(CLI::NonNegativeNumber);
  rollout->add_option("--out", o.out, "training data JSON")->required();

  auto* train = app.add_subcommand("train", "train the policy-value network");
  add_inputs(train, o, false);
  train->add_option("--data", data_path, "training data JSON")->required();
  train->add_option("--weights", o.weights, "starting weights; fresh initialization when omitted");
  train->add_option("--epochs", epochs, "passes over the data")->check(CLI::NonNegativeNumber);
  train->add_option("--batch-size", batch_size, "examples per step")->check(CLI::PositiveNumber);
  train->add_option("--out", o.out, "weights JSON")->required();

  auto* eval = app.add_subcommand("eval", "score predictions against an actor history");
  eval->require_subcommand(1);
  auto* nnba_cmd = eval->add_subcommand("nnba", "nearest-neighbour behavioural alignment");
  add_inputs(nnba_cmd, o, false);
  nnba_cmd->add_option("--history", history_path, "actor history JSON")->required();
  nnba_cmd->add_option("--predicted", predicted_path, "chain JSON or id array")->required();
  nnba_cmd->add_option("--source", source, "label of the prediction source");
  nnba_cmd->add_option("--out", o.out, "score JSON");
  auto* envelope = eval->add_subcommand("envelope", "PCA projection and convex envelope of the history");
  add_inputs(envelope, o, false);
  envelope->add_option("--history", history_path, "actor history JSON")->required();
  envelope->add_option("--predicted", predicted_specs, "source=path, repeatable");
  envelope->add_option("--out", o.out, "output prefix for .csv and .json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*kernel) return cmd_kernel(o);
    if (*infer) return cmd_infer(o);
    if (*rollout) return cmd_rollout_data(o, episodes);
    if (*train) return cmd_train(o, data_path, epochs, batch_size);
    if (*nnba_cmd) return cmd_eval_nnba(o, history_path, predicted_path, source);
    if (*envelope) return cmd_eval_envelope(o, history_path, predicted_specs);
  } catch (const IoError& e) {
    log(e.what());
    return 2;
  } catch (const Error& e) {
    log(e.what());
    return 1;
  } catch (const Json::exception& e) {
    log(e.what());
    return 1;
  }
  return 1;
}
