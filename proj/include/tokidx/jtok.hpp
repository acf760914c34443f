#pragma once

#include <cstddef>

#include "tokidx/tensor.hpp"

// Token-indexed multiplicative gate. Each layer keeps a [V,d] table; a token
// retrieves its row, the row is L2-normalized (with eps) and scaled by a
// learnable per-dimension vector, and the result gates the FFN residual:
//
//   p = 1 + s ⊙ norm_eps(E[x])
//   h_next = a_tilde + dm ⊙ p

namespace tokidx::jtok {

struct JTokLayer {
  Tensor table;   // [V, d]
  Tensor scaler;  // [d]
  double eps = 1e-6;
  bool no_norm = false;  // ablation: p = 1 + s ⊙ E[x]
};

// p for one token id; throws std::out_of_range for bad ids.
Tensor gate_vector(const JTokLayer& layer, int token_id);

// h_next = a_tilde + dm ⊙ p
Tensor apply_gate(const Tensor& dm, const Tensor& p, const Tensor& a_tilde);

}  // namespace tokidx::jtok
