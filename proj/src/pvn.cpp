#include "killchain/pvn.hpp"

#include <cmath>
#include <exception>

#include "killchain/error.hpp"
#include "killchain/random.hpp"

namespace killchain {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

void PvnConfig::validate(bool allow_unset_input) const {
  if (input_dim < 0 || (input_dim == 0 && !allow_unset_input)) throw ValidationError("pvn input_dim must be positive");
  if (latent_dim < 1) throw ValidationError("pvn latent_dim must be positive");
  if (attention_heads < 1) throw ValidationError("pvn attention_heads must be positive");
  if (latent_dim % attention_heads != 0) throw ValidationError("pvn latent_dim must be divisible by attention_heads");
  if (!(lambda_v >= 0.0) || !std::isfinite(lambda_v)) throw ValidationError("pvn lambda_v must be nonnegative");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("pvn learning_rate must be nonnegative");
}

PvnWeights PvnWeights::zeros(const PvnConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.latent_dim;
  const Eigen::Index in = cfg.input_dim;
  PvnWeights w;
  w.config = cfg;
  w.W_c = MatrixXd::Zero(d, in);
  w.W_t = MatrixXd::Zero(d, in);
  for (AttentionBlock* b : {&w.cand_to_ctx, &w.ctx_to_cand, &w.set_attn})
    b->W_q = b->W_k = b->W_v = b->W_o = MatrixXd::Zero(d, d);
  w.ff_W1 = MatrixXd::Zero(d, d);
  w.ff_b1 = MatrixXd::Zero(d, 1);
  w.ff_W2 = MatrixXd::Zero(d, d);
  w.ff_b2 = MatrixXd::Zero(d, 1);
  w.W_f = MatrixXd::Zero(2 * d, d);
  w.w_p = MatrixXd::Zero(d, 1);
  w.w_v = MatrixXd::Zero(2 * d, 1);
  return w;
}

std::size_t PvnWeights::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&n](const std::string&, const MatrixXd& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

PvnInput make_input(const EmbeddingStore& store, std::span<const std::string> candidate_ids) {
  const Embedding& ctx = store.context();
  PvnInput in;
  in.context = Eigen::Map<const VectorXd>(ctx.values.data(), static_cast<Eigen::Index>(ctx.dim()));
  in.candidates.resize(static_cast<Eigen::Index>(candidate_ids.size()), static_cast<Eigen::Index>(store.dim()));
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    const Embedding& e = store.at(candidate_ids[i]);
    in.candidates.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const RowVectorXd>(e.values.data(), static_cast<Eigen::Index>(e.dim()));
  }
  return in;
}

PvnWeights init_weights(const PvnConfig& cfg) {
  PvnWeights w = PvnWeights::zeros(cfg);
  Rng rng(cfg.init_seed);
  w.for_each_tensor([&rng](const std::string& name, MatrixXd& t) {
    // column tensors (biases, heads) map latent -> 1 per row; matrices map cols -> rows
    bool column = name.starts_with("w_") || name.find(".b_") != std::string::npos;
    double fan_in = static_cast<double>(column ? t.rows() : t.cols());
    double bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = (2.0 * uniform01(rng) - 1.0) * bound;
  });
  return w;
}

namespace {

void softmax_rows(MatrixXd& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double hi = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - hi).exp();
    s.row(i) /= s.row(i).sum();
  }
}

struct AttnCache {
  MatrixXd q_in, kv_in, Q, K, V, O;
  std::vector<MatrixXd> A;
};

// out = concat_h(softmax(Q_h K_h^T / sqrt(d_k)) V_h) W_o^T
MatrixXd attn_forward(const AttentionBlock& w, const MatrixXd& q_in, const MatrixXd& kv_in, int heads, AttnCache& c) {
  c.q_in = q_in;
  c.kv_in = kv_in;
  c.Q = q_in * w.W_q.transpose();
  c.K = kv_in * w.W_k.transpose();
  c.V = kv_in * w.W_v.transpose();
  const Eigen::Index dk = c.Q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  c.O.resize(c.Q.rows(), c.Q.cols());
  c.A.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    MatrixXd s = c.Q.middleCols(h * dk, dk) * c.K.middleCols(h * dk, dk).transpose() * scale;
    softmax_rows(s);
    c.O.middleCols(h * dk, dk) = s * c.V.middleCols(h * dk, dk);
    c.A[static_cast<std::size_t>(h)] = std::move(s);
  }
  return c.O * w.W_o.transpose();
}

// Accumulates parameter gradients into `g` and input gradients into dq_in/dkv_in.
void attn_backward(const AttentionBlock& w, const AttnCache& c, const MatrixXd& dout, int heads, AttentionBlock& g,
                   MatrixXd& dq_in, MatrixXd& dkv_in) {
  g.W_o += dout.transpose() * c.O;
  MatrixXd dO = dout * w.W_o;
  const Eigen::Index dk = c.Q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  MatrixXd dQ(c.Q.rows(), c.Q.cols()), dK(c.K.rows(), c.K.cols()), dV(c.V.rows(), c.V.cols());
  for (int h = 0; h < heads; ++h) {
    const MatrixXd& a = c.A[static_cast<std::size_t>(h)];
    MatrixXd dA = dO.middleCols(h * dk, dk) * c.V.middleCols(h * dk, dk).transpose();
    dV.middleCols(h * dk, dk) = a.transpose() * dO.middleCols(h * dk, dk);
    VectorXd inner = (dA.array() * a.array()).rowwise().sum();
    MatrixXd dS = a.array() * (dA.colwise() - inner).array();
    dQ.middleCols(h * dk, dk) = dS * c.K.middleCols(h * dk, dk) * scale;
    dK.middleCols(h * dk, dk) = dS.transpose() * c.Q.middleCols(h * dk, dk) * scale;
  }
  g.W_q += dQ.transpose() * c.q_in;
  g.W_k += dK.transpose() * c.kv_in;
  g.W_v += dV.transpose() * c.kv_in;
  dq_in += dQ * w.W_q;
  dkv_in += dK * w.W_k;
  dkv_in += dV * w.W_v;
}

struct Tape {
  const PvnInput* input = nullptr;
  MatrixXd ct;  // 1 x latent
  MatrixXd Vt;  // n x latent
  AttnCache h_cache, g_cache, s_cache;
  MatrixXd H, G, U1, T, U, Z;
  VectorXd gamma, beta, hvec, logits;
  std::vector<double> policy;
  double value = 0.0;
};

void check_input(const PvnWeights& w, const PvnInput& in) {
  const auto dim = static_cast<Eigen::Index>(w.config.input_dim);
  if (in.candidates.rows() < 1) throw ValidationError("pvn forward needs at least one candidate");
  if (in.context.size() != dim || in.candidates.cols() != dim)
    throw ValidationError("pvn input dimension " + std::to_string(in.candidates.cols()) + " does not match config " +
                          std::to_string(dim));
}

Tape run_forward(const PvnWeights& w, const PvnInput& in) {
  check_input(w, in);
  const int heads = w.config.attention_heads;
  const Eigen::Index d = w.config.latent_dim;
  const Eigen::Index n = in.candidates.rows();
  Tape t;
  t.input = &in;
  t.ct = (w.W_c * in.context).transpose();
  t.Vt = in.candidates * w.W_t.transpose();
  t.H = t.Vt + attn_forward(w.cand_to_ctx, t.Vt, t.ct, heads, t.h_cache);
  t.G = t.ct + attn_forward(w.ctx_to_cand, t.ct, t.Vt, heads, t.g_cache);
  t.U1 = t.H + attn_forward(w.set_attn, t.H, t.H, heads, t.s_cache);
  MatrixXd pre = (t.U1 * w.ff_W1.transpose()).rowwise() + w.ff_b1.col(0).transpose();
  t.T = pre.array().tanh();
  MatrixXd ff = (t.T * w.ff_W2.transpose()).rowwise() + w.ff_b2.col(0).transpose();
  t.U = t.U1 + ff;
  VectorXd f = w.W_f * t.G.transpose();
  t.gamma = f.head(d);
  t.beta = f.tail(d);
  t.Z = (t.U.array().rowwise() * t.gamma.transpose().array()).rowwise() + t.beta.transpose().array();
  t.logits = t.Z * w.w_p.col(0);
  std::vector<double> logits(t.logits.data(), t.logits.data() + n);
  t.policy = softmax(logits);
  t.hvec.resize(2 * d);
  t.hvec.head(d) = t.Z.colwise().mean().transpose();
  t.hvec.tail(d) = t.G.row(0).transpose();
  t.value = w.w_v.col(0).dot(t.hvec);
  return t;
}

PvnGradients run_backward(const PvnWeights& w, const Tape& t, const VectorXd& dlogits, double dvalue) {
  const int heads = w.config.attention_heads;
  const Eigen::Index d = w.config.latent_dim;
  const auto n = static_cast<double>(t.Z.rows());
  PvnGradients g = PvnWeights::zeros(w.config);

  g.w_v.col(0) = dvalue * t.hvec;
  VectorXd dh = dvalue * w.w_v.col(0);
  MatrixXd dG = dh.tail(d).transpose();
  MatrixXd dZ = dlogits * w.w_p.col(0).transpose();
  dZ.rowwise() += dh.head(d).transpose() / n;
  g.w_p.col(0) = t.Z.transpose() * dlogits;

  MatrixXd dU = dZ.array().rowwise() * t.gamma.transpose().array();
  VectorXd df(2 * d);
  df.head(d) = (dZ.array() * t.U.array()).colwise().sum().transpose();
  df.tail(d) = dZ.colwise().sum().transpose();
  g.W_f = df * t.G;
  dG += (w.W_f.transpose() * df).transpose();

  g.ff_W2 = dU.transpose() * t.T;
  g.ff_b2.col(0) = dU.colwise().sum().transpose();
  MatrixXd dP = (dU * w.ff_W2).array() * (1.0 - t.T.array().square());
  g.ff_W1 = dP.transpose() * t.U1;
  g.ff_b1.col(0) = dP.colwise().sum().transpose();
  MatrixXd dU1 = dU + dP * w.ff_W1;

  MatrixXd dH = dU1;
  attn_backward(w.set_attn, t.s_cache, dU1, heads, g.set_attn, dH, dH);

  MatrixXd dct = dG;
  MatrixXd dVt = dH;
  attn_backward(w.ctx_to_cand, t.g_cache, dG, heads, g.ctx_to_cand, dct, dVt);
  attn_backward(w.cand_to_ctx, t.h_cache, dH, heads, g.cand_to_ctx, dVt, dct);

  g.W_c = dct.transpose() * t.input->context.transpose();
  g.W_t = dVt.transpose() * t.input->candidates;
  return g;
}

void check_target(std::span<const double> policy, std::span<const double> pi_target) {
  if (policy.size() != pi_target.size())
    throw ValidationError("policy target length " + std::to_string(pi_target.size()) + " does not match " +
                          std::to_string(policy.size()) + " candidates");
}

// dL/dp_k for the policy term.
std::vector<double> policy_loss_dp(std::span<const double> p, std::span<const double> target, PolicyLoss mode) {
  std::vector<double> dp(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    bool live = p[k] > kProbEpsilon;
    if (mode == PolicyLoss::kl_model_target)
      dp[k] = std::log(std::max(p[k], kProbEpsilon)) - std::log(std::max(target[k], kProbEpsilon)) + (live ? 1.0 : 0.0);
    else
      dp[k] = live ? -target[k] / p[k] : 0.0;
  }
  return dp;
}

}  // namespace

PvnOutput forward(const PvnWeights& w, const PvnInput& input, bool keep_intermediates) {
  Tape t = run_forward(w, input);
  PvnOutput out;
  out.policy = std::move(t.policy);
  out.value = t.value;
  out.logits.assign(t.logits.data(), t.logits.data() + t.logits.size());
  if (keep_intermediates) out.intermediates = PvnIntermediates{t.H, t.G.row(0), t.U, t.Z};
  return out;
}

double policy_loss(std::span<const double> policy, std::span<const double> pi_target, PolicyLoss mode) {
  check_target(policy, pi_target);
  double l = 0.0;
  for (std::size_t k = 0; k < policy.size(); ++k) {
    double logt = std::log(std::max(pi_target[k], kProbEpsilon));
    double logp = std::log(std::max(policy[k], kProbEpsilon));
    l += mode == PolicyLoss::kl_model_target ? policy[k] * (logp - logt) : -pi_target[k] * logp;
  }
  return l;
}

double loss(const PvnOutput& out, std::span<const double> pi_target, double v_target, double lambda_v,
            PolicyLoss mode) {
  double dv = out.value - v_target;
  return policy_loss(out.policy, pi_target, mode) + lambda_v * dv * dv;
}

LossAndGradient loss_and_gradient(const PvnWeights& w, const PvnInput& input, std::span<const double> pi_target,
                                  double v_target, double lambda_v) {
  Tape t = run_forward(w, input);
  check_target(t.policy, pi_target);
  const PolicyLoss mode = w.config.policy_loss;
  std::vector<double> dp = policy_loss_dp(t.policy, pi_target, mode);
  double mean_dp = 0.0;
  for (std::size_t k = 0; k < dp.size(); ++k) mean_dp += t.policy[k] * dp[k];
  VectorXd dlogits(static_cast<Eigen::Index>(dp.size()));
  for (std::size_t k = 0; k < dp.size(); ++k) dlogits[static_cast<Eigen::Index>(k)] = t.policy[k] * (dp[k] - mean_dp);
  double dvalue = 2.0 * lambda_v * (t.value - v_target);

  LossAndGradient r;
  double dv = t.value - v_target;
  r.loss = policy_loss(t.policy, pi_target, mode) + lambda_v * dv * dv;
  r.gradient = run_backward(w, t, dlogits, dvalue);
  return r;
}

PvnGradients backward(const PvnWeights& w, const PvnInput& input, std::span<const double> pi_target,
                      double v_target, double lambda_v) {
  return loss_and_gradient(w, input, pi_target, v_target, lambda_v).gradient;
}

namespace {

TrainStepResult apply_mean_gradient(const PvnWeights& w, std::vector<LossAndGradient>& parts, const PvnConfig& cfg) {
  const double inv = 1.0 / static_cast<double>(parts.size());
  TrainStepResult r{w, 0.0};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!std::isfinite(parts[i].loss))
      throw ValidationError("non-finite loss " + std::to_string(parts[i].loss) + " at batch example " +
                            std::to_string(i));
    r.mean_loss += parts[i].loss;
  }
  r.mean_loss *= inv;

  PvnGradients total = PvnWeights::zeros(w.config);
  std::vector<MatrixXd*> sum_tensors;
  total.for_each_tensor([&](const std::string&, MatrixXd& t) { sum_tensors.push_back(&t); });
  for (auto& part : parts) {
    std::size_t k = 0;
    part.gradient.for_each_tensor([&](const std::string& name, const MatrixXd& t) {
      if (!t.allFinite()) throw ValidationError("non-finite gradient in tensor " + name);
      *sum_tensors[k++] += t;
    });
  }
  std::size_t k = 0;
  r.weights.for_each_tensor([&](const std::string&, MatrixXd& t) { t -= cfg.learning_rate * inv * *sum_tensors[k++]; });
  return r;
}

void check_batch(const PvnWeights& w, std::span<const TrainingExample> batch, const PvnConfig& cfg) {
  if (batch.empty()) throw ValidationError("training batch is empty");
  if (!(cfg.learning_rate >= 0.0)) throw ValidationError("learning rate must be nonnegative");
  (void)w;
}

}  // namespace

TrainStepResult train_step(const PvnWeights& w, std::span<const TrainingExample> batch, const PvnConfig& cfg) {
  check_batch(w, batch, cfg);
  std::vector<LossAndGradient> parts(batch.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const TrainingExample& ex = batch[static_cast<std::size_t>(i)];
      parts[static_cast<std::size_t>(i)] = loss_and_gradient(w, ex.input, ex.pi_target, ex.v_target, cfg.lambda_v);
    } catch (...) {
#pragma omp critical(killchain_train_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return apply_mean_gradient(w, parts, cfg);
}

namespace reference {

TrainStepResult train_step(const PvnWeights& w, std::span<const TrainingExample> batch, const PvnConfig& cfg) {
  check_batch(w, batch, cfg);
  std::vector<LossAndGradient> parts;
  for (const TrainingExample& ex : batch)
    parts.push_back(loss_and_gradient(w, ex.input, ex.pi_target, ex.v_target, cfg.lambda_v));
  return apply_mean_gradient(w, parts, cfg);
}

}  // namespace reference

PvnOutput heuristic_evaluate(const PhasePriors& priors, Phase phase, std::span<const std::string> candidates,
                             const std::function<double(std::string_view)>& state_value) {
  if (candidates.empty()) throw ValidationError("heuristic evaluation needs at least one candidate");
  PvnOutput out;
  double mass = 0.0;
  for (const std::string& id : candidates) {
    out.policy.push_back(priors.prior(phase, id));
    mass += out.policy.back();
  }
  if (!(mass > 0.0)) throw ValidationError("phase priors give zero mass to every candidate");
  for (double& p : out.policy) p /= mass;
  double sum = 0.0;
  for (const std::string& id : candidates) sum += state_value(id);
  out.value = sum / static_cast<double>(candidates.size());
  return out;
}

Json pvn_config_to_json(const PvnConfig& cfg) {
  return {{"input_dim", cfg.input_dim},
          {"latent_dim", cfg.latent_dim},
          {"attention_heads", cfg.attention_heads},
          {"lambda_v", cfg.lambda_v},
          {"learning_rate", cfg.learning_rate},
          {"init_seed", cfg.init_seed},
          {"policy_loss", cfg.policy_loss == PolicyLoss::kl_model_target ? "kl" : "cross_entropy"}};
}

PvnConfig pvn_config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("pvn config must be an object");
  PvnConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "input_dim") cfg.input_dim = it->get<int>();
      else if (k == "latent_dim") cfg.latent_dim = it->get<int>();
      else if (k == "attention_heads") cfg.attention_heads = it->get<int>();
      else if (k == "lambda_v") cfg.lambda_v = it->get<double>();
      else if (k == "learning_rate") cfg.learning_rate = it->get<double>();
      else if (k == "init_seed") cfg.init_seed = it->get<std::uint64_t>();
      else if (k == "policy_loss") {
        std::string mode = it->get<std::string>();
        if (mode == "kl") cfg.policy_loss = PolicyLoss::kl_model_target;
        else if (mode == "cross_entropy") cfg.policy_loss = PolicyLoss::cross_entropy;
        else throw ValidationError("unknown pvn.policy_loss '" + mode + "'");
      } else {
        throw ValidationError("unknown key pvn." + k);
      }
    } catch (const Json::exception&) {
      throw ValidationError("pvn." + k + " has the wrong type");
    }
  }
  cfg.validate(true);
  return cfg;
}

Json weights_to_json(const PvnWeights& w) {
  Json tensors = Json::object();
  w.for_each_tensor([&tensors](const std::string& name, const MatrixXd& t) {
    Json data = Json::array();
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
    tensors[name] = {{"shape", {t.rows(), t.cols()}}, {"data", data}};
  });
  return {{"config", pvn_config_to_json(w.config)}, {"tensors", tensors}};
}

PvnWeights weights_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("config") || !j.contains("tensors"))
    throw ValidationError("weights file must hold \"config\" and \"tensors\"");
  PvnConfig cfg = pvn_config_from_json(j["config"]);
  cfg.validate();
  PvnWeights w = PvnWeights::zeros(cfg);
  const Json& tensors = j["tensors"];
  std::size_t seen = 0;
  w.for_each_tensor([&](const std::string& name, MatrixXd& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("weights file lacks tensor " + name);
    try {
      auto shape = (*it)["shape"].get<std::vector<Eigen::Index>>();
      const Json& data = (*it)["data"];
      if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() ||
          data.size() != static_cast<std::size_t>(t.size()))
        throw ValidationError("tensor " + name + " has the wrong shape for the stored config");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = data[k++].get<double>();
    } catch (const Json::exception&) {
      throw ValidationError("tensor " + name + " is malformed");
    }
    if (!t.allFinite()) throw ValidationError("tensor " + name + " has non-finite entries");
    ++seen;
  });
  if (seen != tensors.size()) throw ValidationError("weights file holds unknown tensors");
  return w;
}

void save_weights(const PvnWeights& w, const std::filesystem::path& path) {
  write_text_file(path, dump_json(weights_to_json(w)));
}

PvnWeights load_weights(const std::filesystem::path& path) {
  return weights_from_json(parse_json(read_text_file(path), path.string()));
}

}  // namespace killchain
