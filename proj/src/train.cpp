#include "tokidx/train.hpp"

#include <cmath>
#include <stdexcept>

namespace tokidx {

Trainer::Trainer(Model& model, const TrainConfig& tc)
    : model_(model),
      tc_(tc),
      source_(model.config().vocab_size, tc.zipf_exponent, tc.markov_boost,
              model.config().seed) {}

StepRecord Trainer::step(std::span<const int> tokens) {
  Graph graph;
  ForwardOut out = model_.forward(graph, tokens);
  graph.backward(out.objective);

  std::vector<Tensor> grads;
  grads.reserve(model_.params().size());
  for (std::size_t i = 0; i < model_.params().size(); ++i) {
    const Tensor& grad = graph.grad(out.param_nodes[i]);
    grads.push_back(grad.size() == 0 ? Tensor::zeros(model_.params()[i].value.shape()) : grad);
  }
  adamw_update(grads);

  ++step_count_;
  StepRecord rec;
  rec.step = step_count_;
  rec.loss = graph.value(out.ce)[0];
  rec.aux = out.aux >= 0 ? graph.value(out.aux)[0] : 0.0;
  rec.layer_std = out.layer_std;
  return rec;
}

void Trainer::adamw_update(const std::vector<Tensor>& grads) {
  const ModelConfig& cfg = model_.config();
  double sq_norm = 0.0;
  for (const Tensor& g : grads) sq_norm += dot(g, g);
  const double norm = std::sqrt(sq_norm);
  const double clip =
      (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

  const double t = static_cast<double>(step_count_ + 1);
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, t);

  for (std::size_t i = 0; i < model_.params().size(); ++i) {
    Param& p = model_.params()[i];
    const Tensor& g = grads[i];
    // Decoupled weight decay on matrices only; norm weights and scalers are
    // left undecayed.
    const double wd = p.value.rank() == 2 ? cfg.weight_decay : 0.0;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double gj = g[j] * clip;
      p.adam_m[j] = cfg.adam_beta1 * p.adam_m[j] + (1.0 - cfg.adam_beta1) * gj;
      p.adam_v[j] = cfg.adam_beta2 * p.adam_v[j] + (1.0 - cfg.adam_beta2) * gj * gj;
      const double m_hat = p.adam_m[j] / bias1;
      const double v_hat = p.adam_v[j] / bias2;
      p.value[j] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + wd * p.value[j]);
    }
  }
}

TrainResult Trainer::run() {
  if (tc_.steps == 0) throw std::invalid_argument("Trainer::run: steps must be positive");
  const std::size_t window = model_.config().seq_len + 1;
  TrainResult result;
  const std::size_t tail_start = tc_.steps - std::max<std::size_t>(1, tc_.steps / 10);
  double tail_sum = 0.0;
  std::size_t tail_count = 0;
  for (std::size_t s = 0; s < tc_.steps; ++s) {
    const std::vector<int> window_tokens = source_.take(window);
    StepRecord rec = step(window_tokens);
    result.records.push_back(std::move(rec));
    if (s >= tail_start) {
      tail_sum += result.records.back().loss;
      ++tail_count;
    }
  }
  result.final_loss = tail_sum / static_cast<double>(tail_count);
  return result;
}

}  // namespace tokidx
