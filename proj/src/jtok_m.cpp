#include "tokidx/jtok_m.hpp"

#include <cmath>
#include <stdexcept>

namespace tokidx::jtok_m {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

RoutingDecision route_logits(const Tensor& logits, std::size_t k) {
  RoutingDecision dec;
  dec.logits = logits;
  dec.selected = topk(logits, k);
  double denom = 0.0;
  for (std::size_t i : dec.selected) denom += sigmoid(logits[i]);
  dec.weights.reserve(k);
  for (std::size_t i : dec.selected) dec.weights.push_back(sigmoid(logits[i]) / denom);
  return dec;
}

RoutingDecision route(const JTokMLayer& layer, const Tensor& h) {
  const std::size_t d = layer.router.rows();
  if (h.size() != d) throw std::invalid_argument("route: hidden state length mismatch");
  const Tensor normed = rmsnorm(h, Tensor::full({d}, 1.0), layer.eps);
  const std::size_t n_e = layer.router.cols();
  Tensor logits({n_e});
  for (std::size_t j = 0; j < n_e; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += normed[i] * layer.router.at(i, j);
    logits[j] = acc;
  }
  return route_logits(logits, layer.top_k);
}

Tensor mix(const std::vector<Tensor>& pool, const RoutingDecision& decision, int token_id) {
  if (pool.empty()) throw std::invalid_argument("mix: empty pool");
  const std::size_t V = pool[0].rows(), d = pool[0].cols();
  if (token_id < 0 || static_cast<std::size_t>(token_id) >= V)
    throw std::out_of_range("mix: token id out of range");
  Tensor e({d});
  for (std::size_t k = 0; k < decision.selected.size(); ++k) {
    const std::size_t i = decision.selected[k];
    if (i >= pool.size()) throw std::out_of_range("mix: selected index out of range");
    const double* row = pool[i].row(static_cast<std::size_t>(token_id));
    const double w = decision.weights[k];
    for (std::size_t j = 0; j < d; ++j) e[j] += w * row[j];
  }
  return e;
}

Tensor inject_delta(const JTokMLayer& layer, const Tensor& mixed) {
  const Tensor modulator = layer.no_norm ? mixed : l2norm_eps(mixed, layer.eps);
  Tensor dr = hadamard(layer.scaler, modulator);
  if (!layer.no_scale_factor) {
    const double factor = 1.0 / std::sqrt(2.0 * static_cast<double>(layer.n_layers));
    dr = scale(dr, factor);
  }
  return dr;
}

Tensor inject(const JTokMLayer& layer, const Tensor& mixed, const Tensor& dm,
              const Tensor& a_tilde) {
  return add(add(a_tilde, dm), inject_delta(layer, mixed));
}

std::vector<double> full_pool_probs(const Tensor& logits) {
  std::vector<double> probs(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = sigmoid(logits[i]);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

double aux_loss(const std::vector<std::vector<double>>& probs,
                const std::vector<std::vector<std::size_t>>& selected, std::size_t n_e,
                std::size_t k, double lambda) {
  const std::size_t T = probs.size();
  if (T == 0) throw std::invalid_argument("aux_loss: empty batch");
  if (selected.size() != T) throw std::invalid_argument("aux_loss: probs/selected mismatch");
  std::vector<double> p_mean(n_e, 0.0);
  std::vector<double> load(n_e, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    if (probs[t].size() != n_e) throw std::invalid_argument("aux_loss: bad probability row");
    for (std::size_t i = 0; i < n_e; ++i) p_mean[i] += probs[t][i];
    for (std::size_t i : selected[t]) {
      if (i >= n_e) throw std::out_of_range("aux_loss: selected index out of range");
      load[i] += 1.0;
    }
  }
  const double inv_t = 1.0 / static_cast<double>(T);
  const double inv_tk = 1.0 / (static_cast<double>(T) * static_cast<double>(k));
  double acc = 0.0;
  for (std::size_t i = 0; i < n_e; ++i) acc += (p_mean[i] * inv_t) * (load[i] * inv_tk);
  return lambda * (static_cast<double>(n_e) * acc);
}

}  // namespace tokidx::jtok_m
