#pragma once

#include <cstddef>
#include <vector>

#include "tokidx/tensor.hpp"

// Mixture of token-indexed modulators. Each layer keeps a pool of n_e [V,d]
// tables and a linear router over the normalized hidden state:
//
//   g = rmsnorm(h)^T R,  G = topk(g, K),  w_i = sigma(g_i) / sum_{j in G} sigma(g_j)
//   e = sum_{i in G} w_i E_i[x]
//   dr = 1/sqrt(2*N_l) * s ⊙ norm_eps(e)
//   h_next = a_tilde + dm + dr

namespace tokidx::jtok_m {

struct JTokMLayer {
  std::vector<Tensor> pool;  // n_e tables, each [V, d]
  Tensor router;             // [d, n_e]
  Tensor scaler;             // [d]
  std::size_t top_k = 2;
  double eps = 1e-6;
  std::size_t n_layers = 1;  // backbone depth, sets the 1/sqrt(2*N_l) factor
  bool no_norm = false;
  bool no_scale_factor = false;
};

struct RoutingDecision {
  std::vector<std::size_t> selected;  // K distinct indices, ascending
  std::vector<double> weights;        // positive, sum to 1
  Tensor logits;                      // [n_e]
};

// Selection and sigmoid-normalized weights from raw router logits.
RoutingDecision route_logits(const Tensor& logits, std::size_t k);

// Full route: logits = rmsnorm(h, ones, eps)^T R. h is the layer input
// hidden state.
RoutingDecision route(const JTokMLayer& layer, const Tensor& h);

// e = sum_{i in G} w_i * E_i[x], accumulated in ascending selected order.
Tensor mix(const std::vector<Tensor>& pool, const RoutingDecision& decision, int token_id);

// dr as defined above; honors the no_norm / no_scale_factor ablations.
Tensor inject_delta(const JTokMLayer& layer, const Tensor& mixed);

// h_next = a_tilde + dm + dr
Tensor inject(const JTokMLayer& layer, const Tensor& mixed, const Tensor& dm,
              const Tensor& a_tilde);

// Load-balance loss over a batch:
//   lambda * n_e * sum_i p_i f_i,
// with p_i the token-mean of the full-pool-normalized probabilities and
// f_i = (#selections of i) / (T*K). probs is [T][n_e]; selected is [T][K].
double aux_loss(const std::vector<std::vector<double>>& probs,
                const std::vector<std::vector<std::size_t>>& selected, std::size_t n_e,
                std::size_t k, double lambda);

// Full-pool-normalized probabilities sigma(g_i) / sum_j sigma(g_j).
std::vector<double> full_pool_probs(const Tensor& logits);

}  // namespace tokidx::jtok_m
