#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "killchain/embedding_store.hpp"
#include "killchain/io.hpp"

namespace killchain {

/// Direction of the policy term of the training loss.
enum class PolicyLoss {
  kl_model_target,  // KL(pi_theta || pi_target), the default
  cross_entropy,    // -sum pi_target log pi_theta (AlphaZero convention)
};

struct PvnConfig {
  int input_dim = 0;  // 0: take the embedding dimension at init time
  int latent_dim = 32;
  int attention_heads = 2;
  double lambda_v = 1.0;
  double learning_rate = 1e-2;
  std::uint64_t init_seed = 0;
  PolicyLoss policy_loss = PolicyLoss::kl_model_target;

  /// Throws ValidationError; `input_dim` must be positive unless `allow_unset_input`.
  void validate(bool allow_unset_input = false) const;

  friend bool operator==(const PvnConfig&, const PvnConfig&) = default;
};

/// Multi-head scaled dot-product attention parameters (no biases).
struct AttentionBlock {
  Eigen::MatrixXd W_q, W_k, W_v, W_o;  // latent x latent
};

/// Every learnable tensor of the network. Vectors are stored as n x 1 matrices
/// so that all blocks can be visited uniformly.
struct PvnWeights {
  PvnConfig config;
  Eigen::MatrixXd W_c;           // latent x input: context projection
  Eigen::MatrixXd W_t;           // latent x input: candidate projection
  AttentionBlock cand_to_ctx;    // H_i = v_i + Attn(v_i, c, c)
  AttentionBlock ctx_to_cand;    // G = c + Attn(c, {v_i}, {v_i})
  AttentionBlock set_attn;       // self-attention over H
  Eigen::MatrixXd ff_W1, ff_b1;  // latent x latent, latent x 1
  Eigen::MatrixXd ff_W2, ff_b2;
  Eigen::MatrixXd W_f;  // 2*latent x latent: FiLM (gamma; beta)
  Eigen::MatrixXd w_p;  // latent x 1
  Eigen::MatrixXd w_v;  // 2*latent x 1

  /// Same shapes, all zero.
  static PvnWeights zeros(const PvnConfig& cfg);

  template <class F>
  void for_each_tensor(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  std::size_t parameter_count() const;

 private:
  template <class Self, class F>
  static void visit(Self& w, F&& f) {
    f("W_c", w.W_c);
    f("W_t", w.W_t);
    auto attn = [&f](const std::string& p, auto& b) {
      f(p + ".W_q", b.W_q);
      f(p + ".W_k", b.W_k);
      f(p + ".W_v", b.W_v);
      f(p + ".W_o", b.W_o);
    };
    attn("H", w.cand_to_ctx);
    attn("G", w.ctx_to_cand);
    attn("set", w.set_attn);
    f("set.ff.W_1", w.ff_W1);
    f("set.ff.b_1", w.ff_b1);
    f("set.ff.W_2", w.ff_W2);
    f("set.ff.b_2", w.ff_b2);
    f("W_f", w.W_f);
    f("w_p", w.w_p);
    f("w_v", w.w_v);
  }
};

using PvnGradients = PvnWeights;

/// Inputs of one evaluation: context (input_dim) and one candidate per row.
struct PvnInput {
  Eigen::VectorXd context;
  Eigen::MatrixXd candidates;  // n x input_dim
};

PvnInput make_input(const EmbeddingStore& store, std::span<const std::string> candidate_ids);

struct PvnIntermediates {
  Eigen::MatrixXd H;  // n x latent
  Eigen::RowVectorXd G;
  Eigen::MatrixXd U;
  Eigen::MatrixXd Z;
};

struct PvnOutput {
  std::vector<double> policy;
  double value = 0.0;
  std::vector<double> logits;
  std::optional<PvnIntermediates> intermediates;
};

/// Uniform in +-1/sqrt(fan_in) per tensor, deterministic in `cfg.init_seed`.
PvnWeights init_weights(const PvnConfig& cfg);

PvnOutput forward(const PvnWeights& w, const PvnInput& input, bool keep_intermediates = false);

inline constexpr double kProbEpsilon = 1e-12;

double policy_loss(std::span<const double> policy, std::span<const double> pi_target, PolicyLoss mode);

/// KL(pi||target) (or cross-entropy) + lambda_v (v - v_target)^2.
double loss(const PvnOutput& out, std::span<const double> pi_target, double v_target, double lambda_v,
            PolicyLoss mode = PolicyLoss::kl_model_target);

struct LossAndGradient {
  double loss = 0.0;
  PvnGradients gradient;
};

/// Analytic gradient of the loss with respect to every tensor.
LossAndGradient loss_and_gradient(const PvnWeights& w, const PvnInput& input, std::span<const double> pi_target,
                                  double v_target, double lambda_v);

PvnGradients backward(const PvnWeights& w, const PvnInput& input, std::span<const double> pi_target,
                      double v_target, double lambda_v);

struct TrainingExample {
  PvnInput input;
  std::vector<double> pi_target;
  double v_target = 0.0;
};

struct TrainStepResult {
  PvnWeights weights;
  double mean_loss = 0.0;  // before the update
};

/// One plain gradient-descent step on the batch-mean loss. Per-example
/// gradients run in parallel and are reduced in batch order.
TrainStepResult train_step(const PvnWeights& w, std::span<const TrainingExample> batch, const PvnConfig& cfg);

namespace reference {
TrainStepResult train_step(const PvnWeights& w, std::span<const TrainingExample> batch, const PvnConfig& cfg);
}  // namespace reference

/// Untrained fallback: the phase prior restricted to the candidates
/// (renormalized) and the mean of the candidates' state values.
PvnOutput heuristic_evaluate(const PhasePriors& priors, Phase phase, std::span<const std::string> candidates,
                             const std::function<double(std::string_view)>& state_value);

Json weights_to_json(const PvnWeights& w);
PvnWeights weights_from_json(const Json& j);
void save_weights(const PvnWeights& w, const std::filesystem::path& path);
PvnWeights load_weights(const std::filesystem::path& path);

Json pvn_config_to_json(const PvnConfig& cfg);
/// Missing keys take defaults; unknown keys are rejected.
PvnConfig pvn_config_from_json(const Json& j);

}  // namespace killchain
