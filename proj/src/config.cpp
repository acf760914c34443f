#include "tokidx/config.hpp"

#include <stdexcept>

namespace tokidx {

std::string to_string(FfnKind k) { return k == FfnKind::kDense ? "dense" : "moe"; }

std::string to_string(PluginKind k) {
  switch (k) {
    case PluginKind::kNone: return "none";
    case PluginKind::kJtok: return "jtok";
    case PluginKind::kJtokM: return "jtok_m";
  }
  return "none";
}

FfnKind ffn_kind_from_string(const std::string& s) {
  if (s == "dense") return FfnKind::kDense;
  if (s == "moe") return FfnKind::kMoe;
  throw std::invalid_argument("model.ffn_kind: expected \"dense\" or \"moe\", got \"" + s + "\"");
}

PluginKind plugin_kind_from_string(const std::string& s) {
  if (s == "none") return PluginKind::kNone;
  if (s == "jtok") return PluginKind::kJtok;
  if (s == "jtok_m") return PluginKind::kJtokM;
  throw std::invalid_argument("plugin.kind: expected \"none\", \"jtok\" or \"jtok_m\", got \"" +
                              s + "\"");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (vocab_size == 0) fail("model.vocab_size", "must be positive");
  if (hidden_dim == 0) fail("model.hidden_dim", "must be positive");
  if (n_layers == 0) fail("model.n_layers", "must be positive");
  if (n_heads == 0) fail("model.n_heads", "must be positive");
  if (hidden_dim % n_heads != 0) fail("model.n_heads", "must divide hidden_dim");
  if ((hidden_dim / n_heads) % 2 != 0)
    fail("model.n_heads", "head dimension must be even for rotary positions");
  if (ffn_dim == 0) fail("model.ffn_dim", "must be positive");
  if (seq_len == 0) fail("model.seq_len", "must be positive");
  if (ffn_kind == FfnKind::kMoe) {
    if (moe_n_experts == 0) fail("model.moe_n_experts", "must be positive");
    if (moe_top_k == 0 || moe_top_k > moe_n_experts)
      fail("model.moe_top_k", "must be in [1, moe_n_experts]");
  }
  if (plugin == PluginKind::kJtokM) {
    if (plugin_n_tables == 0) fail("plugin.n_tables", "must be positive");
    if (plugin_top_k == 0 || plugin_top_k > plugin_n_tables)
      fail("plugin.top_k", "must be in [1, n_tables]");
    if (plugin_aux_lambda < 0.0) fail("plugin.aux_lambda", "must be non-negative");
  }
  if (norm_eps <= 0.0) fail("plugin.norm_eps", "must be positive");
  if (ablate_no_norm && plugin == PluginKind::kNone)
    fail("plugin.ablate_no_norm", "requires a plugin");
  if (ablate_no_scale_factor && plugin != PluginKind::kJtokM)
    fail("plugin.ablate_no_scale_factor", "applies to the jtok_m plugin only");
  if (lr <= 0.0) fail("train.lr", "must be positive");
  if (grad_clip < 0.0) fail("train.grad_clip", "must be non-negative");
}

}  // namespace tokidx
