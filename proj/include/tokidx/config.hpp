#pragma once

#include <cstdint>
#include <string>

namespace tokidx {

enum class FfnKind { kDense, kMoe };
enum class PluginKind { kNone, kJtok, kJtokM };

std::string to_string(FfnKind k);
std::string to_string(PluginKind k);
FfnKind ffn_kind_from_string(const std::string& s);
PluginKind plugin_kind_from_string(const std::string& s);

// Architecture plus training hyperparameters for one run. Defaults are the
// toy scale used throughout the test suite.
struct ModelConfig {
  std::size_t vocab_size = 512;
  std::size_t hidden_dim = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 256;
  FfnKind ffn_kind = FfnKind::kDense;
  std::size_t moe_n_experts = 4;
  std::size_t moe_top_k = 2;
  std::size_t moe_n_shared = 1;
  std::size_t seq_len = 128;

  PluginKind plugin = PluginKind::kNone;
  std::size_t plugin_n_tables = 5;  // modulator pool size n_e
  std::size_t plugin_top_k = 2;     // K
  double plugin_aux_lambda = 1e-4;  // load-balance loss weight
  double norm_eps = 1e-6;           // shared by RMSNorm and the gate normalization
  bool ablate_no_norm = false;      // gate uses the raw table row
  bool ablate_no_scale_factor = false;  // drop the 1/sqrt(2*n_layers) factor

  std::uint64_t seed = 1;
  double lr = 1e-3;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

}  // namespace tokidx
