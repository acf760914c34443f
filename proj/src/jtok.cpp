#include "tokidx/jtok.hpp"

#include <stdexcept>

namespace tokidx::jtok {

Tensor gate_vector(const JTokLayer& layer, int token_id) {
  if (token_id < 0 || static_cast<std::size_t>(token_id) >= layer.table.rows())
    throw std::out_of_range("gate_vector: token id out of range");
  const std::size_t d = layer.table.cols();
  if (layer.scaler.size() != d)
    throw std::invalid_argument("gate_vector: scaler length must equal hidden dim");
  Tensor row({d});
  const double* src = layer.table.row(static_cast<std::size_t>(token_id));
  for (std::size_t i = 0; i < d; ++i) row[i] = src[i];
  const Tensor modulator = layer.no_norm ? row : l2norm_eps(row, layer.eps);
  Tensor p({d});
  for (std::size_t i = 0; i < d; ++i) p[i] = 1.0 + layer.scaler[i] * modulator[i];
  return p;
}

Tensor apply_gate(const Tensor& dm, const Tensor& p, const Tensor& a_tilde) {
  return add(a_tilde, hadamard(dm, p));
}

}  // namespace tokidx::jtok
