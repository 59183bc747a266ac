#pragma once

// Straight-line re-evaluation of the policy-value network with explicit
// loops over scalars. Reads weights element by element only.

#include <cmath>
#include <vector>

#include "killchain/pvn.hpp"

namespace killchain::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat to_rows(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

// y_i = W x_i for each row x_i
inline Mat matvec_rows(const Mat& W, const Mat& xs) {
  Mat out;
  for (const auto& x : xs) {
    std::vector<double> y(W.size(), 0.0);
    for (std::size_t a = 0; a < W.size(); ++a)
      for (std::size_t b = 0; b < x.size(); ++b) y[a] += W[a][b] * x[b];
    out.push_back(y);
  }
  return out;
}

inline std::vector<double> oracle_softmax(const std::vector<double>& x) {
  double hi = x[0];
  for (double v : x) hi = std::max(hi, v);
  std::vector<double> e;
  double z = 0.0;
  for (double v : x) {
    e.push_back(std::exp(v - hi));
    z += e.back();
  }
  for (double& v : e) v /= z;
  return e;
}

inline Mat oracle_attention(const AttentionBlock& blk, const Mat& q_in, const Mat& kv_in, int heads) {
  Mat Q = matvec_rows(to_rows(blk.W_q), q_in);
  Mat K = matvec_rows(to_rows(blk.W_k), kv_in);
  Mat V = matvec_rows(to_rows(blk.W_v), kv_in);
  const std::size_t d = Q[0].size();
  const std::size_t dk = d / static_cast<std::size_t>(heads);
  Mat O(Q.size(), std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h) {
    const std::size_t lo = static_cast<std::size_t>(h) * dk;
    for (std::size_t i = 0; i < Q.size(); ++i) {
      std::vector<double> s;
      for (std::size_t j = 0; j < K.size(); ++j) {
        double dotp = 0.0;
        for (std::size_t a = lo; a < lo + dk; ++a) dotp += Q[i][a] * K[j][a];
        s.push_back(dotp / std::sqrt(static_cast<double>(dk)));
      }
      std::vector<double> att = oracle_softmax(s);
      for (std::size_t j = 0; j < K.size(); ++j)
        for (std::size_t a = lo; a < lo + dk; ++a) O[i][a] += att[j] * V[j][a];
    }
  }
  return matvec_rows(to_rows(blk.W_o), O);
}

struct OracleOutput {
  std::vector<double> policy;
  double value = 0.0;
};

inline OracleOutput oracle_forward(const PvnWeights& w, const std::vector<double>& context, const Mat& candidates) {
  const int heads = w.config.attention_heads;
  const std::size_t d = static_cast<std::size_t>(w.config.latent_dim);
  const std::size_t n = candidates.size();

  Mat ct = matvec_rows(to_rows(w.W_c), Mat{context});
  Mat vt = matvec_rows(to_rows(w.W_t), candidates);

  Mat H = oracle_attention(w.cand_to_ctx, vt, ct, heads);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) H[i][a] += vt[i][a];

  Mat G = oracle_attention(w.ctx_to_cand, ct, vt, heads);
  for (std::size_t a = 0; a < d; ++a) G[0][a] += ct[0][a];

  Mat U = oracle_attention(w.set_attn, H, H, heads);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) U[i][a] += H[i][a];

  Mat T = matvec_rows(to_rows(w.ff_W1), U);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) T[i][a] = std::tanh(T[i][a] + w.ff_b1(static_cast<Eigen::Index>(a), 0));
  Mat F = matvec_rows(to_rows(w.ff_W2), T);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) U[i][a] += F[i][a] + w.ff_b2(static_cast<Eigen::Index>(a), 0);

  std::vector<double> film = matvec_rows(to_rows(w.W_f), G)[0];

  Mat Z = U;
  std::vector<double> logits(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      Z[i][a] = film[a] * U[i][a] + film[d + a];
      logits[i] += Z[i][a] * w.w_p(static_cast<Eigen::Index>(a), 0);
    }

  OracleOutput out;
  out.policy = oracle_softmax(logits);
  for (std::size_t a = 0; a < d; ++a) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += Z[i][a];
    mean /= static_cast<double>(n);
    out.value += w.w_v(static_cast<Eigen::Index>(a), 0) * mean + w.w_v(static_cast<Eigen::Index>(d + a), 0) * G[0][a];
  }
  return out;
}

}  // namespace killchain::testing
