#include "tokidx/sys_sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace tokidx::sim {

namespace {

std::vector<double> zipf_cdf(std::size_t vocab, double exponent) {
  std::vector<double> cdf(vocab);
  double acc = 0.0;
  for (std::size_t r = 0; r < vocab; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -exponent);
    cdf[r] = acc;
  }
  return cdf;
}

int sample_cdf(const std::vector<double>& cdf, double u) {
  const double target = u * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  return static_cast<int>(std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1));
}

}  // namespace

AccessTrace zipf_generate(std::size_t vocab, double exponent, std::size_t length,
                          std::uint64_t seed) {
  if (vocab == 0) throw std::invalid_argument("zipf_generate: vocab must be positive");
  if (!(exponent > 0.0)) throw std::invalid_argument("zipf_generate: exponent must be positive");
  AccessTrace trace;
  trace.vocab_size = vocab;
  trace.zipf_exponent = exponent;
  trace.seed = seed;
  trace.ids.reserve(length);
  const auto cdf = zipf_cdf(vocab, exponent);
  Rng rng = Rng::stream(seed, "zipf");
  for (std::size_t i = 0; i < length; ++i) trace.ids.push_back(sample_cdf(cdf, rng.uniform()));
  return trace;
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

}  // namespace

MarkovZipfSource::MarkovZipfSource(std::size_t vocab, double exponent, double boost,
                                   std::uint64_t seed)
    : vocab_(vocab),
      exponent_(exponent),
      boost_(boost),
      base_cdf_(zipf_cdf(vocab, exponent)),
      rng_(Rng::stream(seed, "data")) {
  if (vocab == 0) throw std::invalid_argument("MarkovZipfSource: vocab must be positive");
  if (!(exponent > 0.0))
    throw std::invalid_argument("MarkovZipfSource: exponent must be positive");
  if (boost < 0.0) throw std::invalid_argument("MarkovZipfSource: boost must be non-negative");
}

int MarkovZipfSource::next() {
  // Mixture of a Zipf marginal and a per-state set of pseudorandom successor
  // tokens. The successor table is a full-rank random structure over the
  // vocabulary, so next-token statistics carry per-id information that a
  // low-rank model cannot fully absorb; boost sets the odds of drawing from
  // the successor set. Marginals stay heavy-tailed through the Zipf part.
  const double mix = boost_ / (1.0 + boost_);
  int tok;
  if (rng_.uniform() < mix) {
    const std::size_t slot = rng_.pick(kSuccessors);
    tok = static_cast<int>(
        mix64(static_cast<std::uint64_t>(state_) * kSuccessors + slot + 1) % vocab_);
  } else {
    tok = sample_cdf(base_cdf_, rng_.uniform());
  }
  state_ = tok;
  return tok;
}

std::vector<int> MarkovZipfSource::take(std::size_t n) {
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

std::pair<Tensor, TrafficReport> dedup_gather(const Tensor& table, const AccessTrace& trace) {
  const std::size_t V = table.rows(), d = table.cols();
  const std::size_t T = trace.ids.size();
  Tensor out({std::max<std::size_t>(T, 1), d});
  if (T == 0) return {Tensor({1, d}), TrafficReport{}};

  // First pass: row cache indexed by unique id, filled on first occurrence.
  std::unordered_map<int, std::size_t> first_row;
  first_row.reserve(T);
  TrafficReport report;
  for (std::size_t t = 0; t < T; ++t) {
    const int id = trace.ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw std::out_of_range("dedup_gather: token id out of range");
    auto [it, inserted] = first_row.emplace(id, t);
    const double* src = inserted ? table.row(static_cast<std::size_t>(id)) : out.row(it->second);
    double* dst = out.row(t);
    for (std::size_t i = 0; i < d; ++i) dst[i] = src[i];
    if (inserted) report.elements_read += d;
  }
  report.naive_elements_read = static_cast<std::uint64_t>(T) * d;
  return {std::move(out), report};
}

ShardLayout ShardLayout::by_expert_blocks(std::size_t n_shards, std::size_t n_experts) {
  if (n_shards == 0) throw std::invalid_argument("ShardLayout: n_shards must be positive");
  ShardLayout layout;
  layout.n_shards = n_shards;
  layout.expert_owner.resize(n_experts);
  const std::size_t block = (n_experts + n_shards - 1) / n_shards;
  for (std::size_t e = 0; e < n_experts; ++e) layout.expert_owner[e] = e / block;
  return layout;
}

ShardLayout ShardLayout::all_on_shard(std::size_t n_shards, std::size_t owner,
                                      std::size_t n_experts) {
  if (owner >= n_shards) throw std::invalid_argument("ShardLayout: owner out of range");
  ShardLayout layout;
  layout.n_shards = n_shards;
  layout.expert_owner.assign(n_experts, owner);
  return layout;
}

std::pair<Tensor, TrafficReport> premix_shard(const ShardLayout& layout,
                                              const std::vector<Tensor>& pool,
                                              const std::vector<jtok_m::RoutingDecision>& decisions,
                                              const AccessTrace& trace) {
  const std::size_t T = trace.ids.size();
  if (decisions.size() != T)
    throw std::invalid_argument("premix_shard: one routing decision per token required");
  if (pool.empty()) throw std::invalid_argument("premix_shard: empty pool");
  if (layout.expert_owner.size() < pool.size())
    throw std::invalid_argument("premix_shard: layout does not cover the pool");
  const std::size_t d = pool[0].cols();
  Tensor out({std::max<std::size_t>(T, 1), d});
  TrafficReport report;
  const bool sharded = layout.n_shards > 1;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& dec = decisions[t];
    const std::size_t k = dec.selected.size();
    // The mix itself is computed exactly as the unsharded reference
    // (ascending selected order), so the result is bit-identical no matter
    // which shard owns the rows.
    Tensor mixed = jtok_m::mix(pool, dec, trace.ids[t]);
    double* dst = out.row(t);
    for (std::size_t i = 0; i < d; ++i) dst[i] = mixed[i];

    if (sharded) {
      const std::size_t owner0 = layout.expert_owner[dec.selected[0]];
      bool colocated = true;
      for (std::size_t j : dec.selected) colocated &= (layout.expert_owner[j] == owner0);
      if (colocated) {
        report.elements_communicated += d;  // only the mixed vector crosses
        report.premix_tokens += 1;
      } else {
        report.elements_communicated += k * d;  // per-row fallback
        report.fallback_tokens += 1;
      }
      report.naive_elements_communicated += k * d;
    }
  }
  return {std::move(out), report};
}

namespace {

std::uint64_t offload_elements(PluginKind kind, std::size_t n_layers, std::size_t dim,
                               std::size_t vocab, const AccessTrace& trace,
                               const std::vector<std::vector<std::size_t>>& selections) {
  for (int id : trace.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw std::out_of_range("offload_volume: token id out of range");
  }
  std::uint64_t per_layer = 0;
  if (kind == PluginKind::kJtok) {
    std::set<int> unique(trace.ids.begin(), trace.ids.end());
    per_layer = static_cast<std::uint64_t>(unique.size()) * dim;
  } else if (kind == PluginKind::kJtokM) {
    if (selections.size() != trace.ids.size())
      throw std::invalid_argument("offload_volume: one selection set per token required");
    std::set<std::pair<int, std::size_t>> pairs;
    for (std::size_t t = 0; t < trace.ids.size(); ++t)
      for (std::size_t e : selections[t]) pairs.emplace(trace.ids[t], e);
    per_layer = static_cast<std::uint64_t>(pairs.size()) * dim;
  } else {
    throw std::invalid_argument("offload_volume: plugin kind must be jtok or jtok_m");
  }
  return per_layer * n_layers;
}

}  // namespace

TrafficReport offload_volume(PluginKind kind, std::size_t n_layers, std::size_t dim,
                             const AccessTrace& trace,
                             const std::vector<std::vector<std::size_t>>& selections) {
  TrafficReport report;
  report.elements_transferred_h2d =
      offload_elements(kind, n_layers, dim, trace.vocab_size, trace, selections);
  // The volume depends on the trace and selections only; doubling the stored
  // vocabulary must not change it.
  const std::uint64_t doubled =
      offload_elements(kind, n_layers, dim, trace.vocab_size * 2, trace, selections);
  if (doubled != report.elements_transferred_h2d)
    throw std::logic_error("offload_volume: transfer volume changed with vocabulary size");
  return report;
}

PrefetchCheck prefetch_check(PluginKind kind, std::size_t n_layers) {
  if (kind == PluginKind::kNone)
    throw std::invalid_argument("prefetch_check: plugin kind must be jtok or jtok_m");
  PrefetchCheck check;
  check.lookup_ready_stage.resize(n_layers);
  check.writeback_stage.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    // Stage l is the point where layer l's input hidden state exists; the
    // write-back for layer l completes at stage l+1.
    check.lookup_ready_stage[l] = (kind == PluginKind::kJtok) ? 0 : l;
    check.writeback_stage[l] = l + 1;
  }
  check.lookups_precede_writeback = true;
  for (std::size_t l = 0; l < n_layers; ++l)
    check.lookups_precede_writeback &= check.lookup_ready_stage[l] < check.writeback_stage[l];
  check.lookups_depend_only_on_ids = (kind == PluginKind::kJtok);
  return check;
}

}  // namespace tokidx::sim
