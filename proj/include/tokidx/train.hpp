#pragma once

#include <span>
#include <vector>

#include "tokidx/backbone.hpp"
#include "tokidx/sys_sim.hpp"

namespace tokidx {

struct TrainConfig {
  std::size_t steps = 500;
  double zipf_exponent = 1.1;
  double markov_boost = 1.5;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;  // cross-entropy only
  double aux = 0.0;   // load-balance loss (0 when no jtok_m plugin)
  std::vector<double> layer_std;
};

struct TrainResult {
  std::vector<StepRecord> records;  // one per step
  double final_loss = 0.0;          // mean cross-entropy over the last 10% of steps
};

// Single-threaded AdamW training loop over the synthetic Markov-Zipf corpus.
// Data order depends only on (seed, data config), never on the model, so
// plugin variants see identical batches.
class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& tc);

  // One optimizer step on the given window (length seq_len + 1).
  StepRecord step(std::span<const int> tokens);

  TrainResult run();

 private:
  void adamw_update(const std::vector<Tensor>& grads);

  Model& model_;
  TrainConfig tc_;
  sim::MarkovZipfSource source_;
  std::size_t step_count_ = 0;
};

}  // namespace tokidx
