#include "tokidx/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "tokidx/rng.hpp"

namespace tokidx {

namespace {

std::string layer_key(std::size_t l, const char* suffix) {
  return "L" + std::to_string(l) + "." + suffix;
}

}  // namespace

std::size_t Model::add_param(const std::string& name, Tensor value) {
  params_.push_back(Param{name, std::move(value), {}, {}});
  Param& p = params_.back();
  p.adam_m = Tensor::zeros(p.value.shape());
  p.adam_v = Tensor::zeros(p.value.shape());
  return params_.size() - 1;
}

std::size_t Model::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::invalid_argument("unknown parameter: " + name);
}

Param& Model::param(const std::string& name) { return params_[index_of(name)]; }
const Param& Model::param(const std::string& name) const { return params_[index_of(name)]; }

bool Model::has_param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

Model Model::init(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  const std::size_t V = cfg.vocab_size, d = cfg.hidden_dim, f = cfg.ffn_dim;

  // Backbone weights come from the "init" stream; plugin weights from a
  // separate stream so that attaching a plugin leaves the backbone draw
  // untouched (identity-start runs must match the plain backbone exactly).
  Rng init_rng = Rng::stream(cfg.seed, "init");
  Rng plugin_rng = Rng::stream(cfg.seed, "plugin");

  const double proj_sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double ffn_sd = 1.0 / std::sqrt(static_cast<double>(f));

  m.add_param("tok_emb", Tensor::random_normal({V, d}, init_rng, 0.0, 0.02));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    m.add_param(layer_key(l, "attn_norm"), Tensor::full({d}, 1.0));
    for (const char* w : {"wq", "wk", "wv", "wo"})
      m.add_param(layer_key(l, w), Tensor::random_normal({d, d}, init_rng, 0.0, proj_sd));
    m.add_param(layer_key(l, "ffn_norm"), Tensor::full({d}, 1.0));
    if (cfg.ffn_kind == FfnKind::kDense) {
      m.add_param(layer_key(l, "ffn.w1"), Tensor::random_normal({d, f}, init_rng, 0.0, proj_sd));
      m.add_param(layer_key(l, "ffn.w3"), Tensor::random_normal({d, f}, init_rng, 0.0, proj_sd));
      m.add_param(layer_key(l, "ffn.w2"), Tensor::random_normal({f, d}, init_rng, 0.0, ffn_sd));
    } else {
      m.add_param(layer_key(l, "moe.router"),
                  Tensor::random_normal({d, cfg.moe_n_experts}, init_rng, 0.0, proj_sd));
      for (std::size_t e = 0; e < cfg.moe_n_experts; ++e) {
        const std::string base = layer_key(l, "moe.e") + std::to_string(e);
        m.add_param(base + ".w1", Tensor::random_normal({d, f}, init_rng, 0.0, proj_sd));
        m.add_param(base + ".w3", Tensor::random_normal({d, f}, init_rng, 0.0, proj_sd));
        m.add_param(base + ".w2", Tensor::random_normal({f, d}, init_rng, 0.0, ffn_sd));
      }
      for (std::size_t s = 0; s < cfg.moe_n_shared; ++s) {
        const std::string base = layer_key(l, "moe.s") + std::to_string(s);
        m.add_param(base + ".w1", Tensor::random_normal({d, f}, init_rng, 0.0, proj_sd));
        m.add_param(base + ".w3", Tensor::random_normal({d, f}, init_rng, 0.0, proj_sd));
        m.add_param(base + ".w2", Tensor::random_normal({f, d}, init_rng, 0.0, ffn_sd));
      }
    }
    if (cfg.plugin == PluginKind::kJtok) {
      m.add_param(layer_key(l, "jtok.table"),
                  Tensor::random_normal({V, d}, plugin_rng, 0.0, 0.01));
      m.add_param(layer_key(l, "jtok.scaler"), Tensor::zeros({d}));
    } else if (cfg.plugin == PluginKind::kJtokM) {
      for (std::size_t i = 0; i < cfg.plugin_n_tables; ++i) {
        m.add_param(layer_key(l, "jtokm.e") + std::to_string(i) + ".table",
                    Tensor::random_normal({V, d}, plugin_rng, 0.0, 0.01));
      }
      m.add_param(layer_key(l, "jtokm.router"),
                  Tensor::random_normal({d, cfg.plugin_n_tables}, plugin_rng, 0.0, proj_sd));
      m.add_param(layer_key(l, "jtokm.scaler"), Tensor::zeros({d}));
    }
  }
  m.add_param("final_norm", Tensor::full({d}, 1.0));
  m.add_param("lm_head", Tensor::random_normal({d, V}, init_rng, 0.0, proj_sd));
  return m;
}

std::vector<std::uint8_t> causal_mask(std::size_t t) {
  std::vector<std::uint8_t> mask(t * t, 0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j <= i; ++j) mask[i * t + j] = 1;
  return mask;
}

namespace {

// Per-row top-k over a [T,n] logits value; records into or replays from the
// routing trace when one is supplied.
std::vector<std::vector<std::size_t>> select_topk_rows(const Tensor& logits, std::size_t k,
                                                       RoutingTrace* trace) {
  if (trace && !trace->recording) {
    if (trace->cursor >= trace->sites.size())
      throw std::logic_error("routing trace replay exhausted");
    return trace->sites[trace->cursor++];
  }
  const std::size_t T = logits.rows(), n = logits.cols();
  std::vector<std::vector<std::size_t>> sel(T);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor row({n});
    for (std::size_t j = 0; j < n; ++j) row[j] = logits.at(t, j);
    sel[t] = topk(row, k);
  }
  if (trace && trace->recording) trace->sites.push_back(sel);
  return sel;
}

std::vector<std::uint8_t> selection_mask(const std::vector<std::vector<std::size_t>>& sel,
                                         std::size_t n) {
  std::vector<std::uint8_t> mask(sel.size() * n, 0);
  for (std::size_t t = 0; t < sel.size(); ++t)
    for (std::size_t j : sel[t]) mask[t * n + j] = 1;
  return mask;
}

Tensor selection_mask_tensor(const std::vector<std::vector<std::size_t>>& sel, std::size_t n) {
  Tensor m({sel.size(), n});
  for (std::size_t t = 0; t < sel.size(); ++t)
    for (std::size_t j : sel[t]) m.at(t, j) = 1.0;
  return m;
}

struct Builder {
  Graph& g;
  const Model& model;
  const ModelConfig& cfg;
  std::unordered_map<std::string, Graph::NodeId> leaves;

  Graph::NodeId p(const std::string& name) const { return leaves.at(name); }

  Graph::NodeId gated_mlp(Graph::NodeId x, const std::string& base) {
    Graph::NodeId a = g.silu(g.matmul(x, p(base + ".w1")));
    Graph::NodeId b = g.matmul(x, p(base + ".w3"));
    return g.matmul(g.mul(a, b), p(base + ".w2"));
  }

  Graph::NodeId attention(Graph::NodeId x_normed, std::size_t l, std::size_t T) {
    const std::size_t d = cfg.hidden_dim, heads = cfg.n_heads, dh = d / heads;
    Graph::NodeId q = g.matmul(x_normed, p(layer_key(l, "wq")));
    Graph::NodeId k = g.matmul(x_normed, p(layer_key(l, "wk")));
    Graph::NodeId v = g.matmul(x_normed, p(layer_key(l, "wv")));
    const auto mask = causal_mask(T);
    std::vector<Graph::NodeId> head_ctx;
    head_ctx.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Graph::NodeId qh = g.rope_rows(g.col_slice(q, h * dh, (h + 1) * dh));
      Graph::NodeId kh = g.rope_rows(g.col_slice(k, h * dh, (h + 1) * dh));
      Graph::NodeId vh = g.col_slice(v, h * dh, (h + 1) * dh);
      Graph::NodeId scores =
          g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
      Graph::NodeId probs = g.masked_softmax_rows(scores, mask);
      head_ctx.push_back(g.matmul(probs, vh));
    }
    return g.matmul(g.col_concat(head_ctx), p(layer_key(l, "wo")));
  }
};

}  // namespace

ForwardOut Model::forward(Graph& g, std::span<const int> tokens, RoutingTrace* trace) const {
  if (tokens.size() < 2)
    throw std::invalid_argument("forward: need at least 2 tokens (1 input, 1 target)");
  const std::size_t T = tokens.size() - 1;
  const std::size_t d = cfg_.hidden_dim;
  const double eps = cfg_.norm_eps;

  std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());

  ForwardOut out;
  Builder b{g, *this, cfg_, {}};
  out.param_nodes.reserve(params_.size());
  for (const auto& prm : params_) {
    Graph::NodeId id = g.leaf(prm.value, true);
    b.leaves.emplace(prm.name, id);
    out.param_nodes.push_back(id);
  }

  Graph::NodeId h = g.rows_lookup(b.p("tok_emb"), inputs);

  std::vector<Graph::NodeId> layer_aux;
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    // Attention sublayer: a_tilde = h + Attn(RMSNorm(h)).
    Graph::NodeId a_in = g.rmsnorm_rows(h, b.p(layer_key(l, "attn_norm")), eps);
    Graph::NodeId da = b.attention(a_in, l, T);
    Graph::NodeId a_tilde = g.add(h, da);

    // FFN sublayer on the normalized post-attention state.
    Graph::NodeId m_in = g.rmsnorm_rows(a_tilde, b.p(layer_key(l, "ffn_norm")), eps);
    Graph::NodeId dm;
    if (cfg_.ffn_kind == FfnKind::kDense) {
      dm = b.gated_mlp(m_in, layer_key(l, "ffn"));
    } else {
      Graph::NodeId logits = g.matmul(m_in, b.p(layer_key(l, "moe.router")));
      const auto sel = select_topk_rows(g.value(logits), cfg_.moe_top_k, trace);
      Graph::NodeId wts =
          g.masked_softmax_rows(logits, selection_mask(sel, cfg_.moe_n_experts));
      Graph::NodeId acc = -1;
      for (std::size_t e = 0; e < cfg_.moe_n_experts; ++e) {
        const std::string base = layer_key(l, "moe.e") + std::to_string(e);
        Graph::NodeId weighted =
            g.row_scale(b.gated_mlp(m_in, base), g.col_slice(wts, e, e + 1));
        acc = (acc < 0) ? weighted : g.add(acc, weighted);
      }
      for (std::size_t s = 0; s < cfg_.moe_n_shared; ++s) {
        const std::string base = layer_key(l, "moe.s") + std::to_string(s);
        Graph::NodeId shared = b.gated_mlp(m_in, base);
        acc = (acc < 0) ? shared : g.add(acc, shared);
      }
      dm = acc;
    }

    // Layer write-back, replaced by the plugin update when one is active.
    if (cfg_.plugin == PluginKind::kJtok) {
      Graph::NodeId rows = g.rows_lookup(b.p(layer_key(l, "jtok.table")), inputs);
      Graph::NodeId modulator = cfg_.ablate_no_norm ? rows : g.l2norm_rows(rows, eps);
      Graph::NodeId gate =
          g.add_const(g.row_broadcast_mul(modulator, b.p(layer_key(l, "jtok.scaler"))), 1.0);
      h = g.add(a_tilde, g.mul(dm, gate));
    } else if (cfg_.plugin == PluginKind::kJtokM) {
      const std::size_t n_e = cfg_.plugin_n_tables;
      // The router reads the same normalized state that feeds attention.
      Graph::NodeId logits = g.matmul(a_in, b.p(layer_key(l, "jtokm.router")));
      const auto sel = select_topk_rows(g.value(logits), cfg_.plugin_top_k, trace);
      Graph::NodeId sig = g.sigmoid(logits);
      Graph::NodeId sel_mask = g.leaf(selection_mask_tensor(sel, n_e), false);
      Graph::NodeId sel_sig = g.mul(sig, sel_mask);
      Graph::NodeId wts = g.row_div(sel_sig, g.row_sum(sel_sig));
      Graph::NodeId mixed = -1;
      for (std::size_t i = 0; i < n_e; ++i) {
        Graph::NodeId rows = g.rows_lookup(
            b.p(layer_key(l, "jtokm.e") + std::to_string(i) + ".table"), inputs);
        Graph::NodeId contrib = g.row_scale(rows, g.col_slice(wts, i, i + 1));
        mixed = (mixed < 0) ? contrib : g.add(mixed, contrib);
      }
      Graph::NodeId modulator = cfg_.ablate_no_norm ? mixed : g.l2norm_rows(mixed, eps);
      Graph::NodeId dr = g.row_broadcast_mul(modulator, b.p(layer_key(l, "jtokm.scaler")));
      if (!cfg_.ablate_no_scale_factor)
        dr = g.scale(dr, 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers)));
      out.delta_r_nodes.push_back(dr);
      h = g.add(g.add(a_tilde, dm), dr);

      // Load-balance statistics for this layer.
      Graph::NodeId p_full = g.row_div(sig, g.row_sum(sig));
      Graph::NodeId p_bar = g.col_mean(p_full);
      Tensor load({n_e});
      for (const auto& row_sel : sel)
        for (std::size_t j : row_sel) load[j] += 1.0;
      const double inv_tk =
          1.0 / (static_cast<double>(T) * static_cast<double>(cfg_.plugin_top_k));
      for (std::size_t j = 0; j < n_e; ++j) load[j] *= inv_tk;
      layer_aux.push_back(
          g.scale(g.dot_const(p_bar, load), static_cast<double>(n_e)));
    } else {
      h = g.add(a_tilde, dm);
    }
    out.layer_std.push_back(stddev(g.value(h)));
  }

  out.hidden_final = h;
  Graph::NodeId final_h = g.rmsnorm_rows(h, b.p("final_norm"), eps);
  Graph::NodeId logits = g.matmul(final_h, b.p("lm_head"));
  out.ce = g.cross_entropy(logits, targets);
  if (!layer_aux.empty()) {
    Graph::NodeId acc = layer_aux[0];
    for (std::size_t i = 1; i < layer_aux.size(); ++i) acc = g.add(acc, layer_aux[i]);
    Graph::NodeId mean_aux = g.scale(acc, 1.0 / static_cast<double>(layer_aux.size()));
    out.aux = g.scale(mean_aux, cfg_.plugin_aux_lambda);
    out.objective = g.add(out.ce, out.aux);
  } else {
    out.objective = out.ce;
  }
  return out;
}

}  // namespace tokidx
