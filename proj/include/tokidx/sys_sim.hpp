#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tokidx/config.hpp"
#include "tokidx/jtok_m.hpp"
#include "tokidx/tensor.hpp"

// Memory-traffic accounting for token-indexed tables: Zipfian workload
// generation, gather deduplication, owner-rank premixing under table
// sharding, and host-to-device offload volume. All counters are in
// real-number elements (multiply by 8 for bytes at 64-bit precision).

namespace tokidx::sim {

struct AccessTrace {
  std::vector<int> ids;
  std::size_t vocab_size = 0;
  double zipf_exponent = 0.0;
  std::uint64_t seed = 0;
};

// P(rank r) proportional to (r+1)^(-exponent); token id equals frequency rank.
AccessTrace zipf_generate(std::size_t vocab, double exponent, std::size_t length,
                          std::uint64_t seed);

// Synthetic training text: with probability boost/(1+boost) the next token
// comes from a per-state set of pseudorandom successors, otherwise from the
// Zipf marginal. The successor table makes the stream Markov with full-rank
// per-id structure while keeping heavy-tailed token frequencies.
class MarkovZipfSource {
 public:
  static constexpr std::size_t kSuccessors = 4;  // boosted successors per state

  MarkovZipfSource(std::size_t vocab, double exponent, double boost, std::uint64_t seed);
  int next();
  std::vector<int> take(std::size_t n);
  std::size_t vocab() const { return vocab_; }

 private:
  std::size_t vocab_;
  double exponent_;
  double boost_;
  std::vector<double> base_cdf_;  // unnormalized Zipf prefix sums
  Rng rng_;
  int state_ = 0;
};

struct TrafficReport {
  std::uint64_t elements_read = 0;
  std::uint64_t naive_elements_read = 0;
  std::uint64_t elements_communicated = 0;
  std::uint64_t naive_elements_communicated = 0;
  std::uint64_t elements_transferred_h2d = 0;
  std::uint64_t premix_tokens = 0;
  std::uint64_t fallback_tokens = 0;
};

// Gathers each unique id once and scatters to all occurrences. The result is
// bit-identical to a per-occurrence gather; elements_read counts unique rows.
std::pair<Tensor, TrafficReport> dedup_gather(const Tensor& table, const AccessTrace& trace);

// Table placement across shards. Tables are sharded whole (by expert index);
// a vocab-range mode exists for the single-table plugin. When n_shards == 1
// the tables are co-resident with compute and nothing is communicated;
// otherwise every retrieved vector crosses a shard boundary.
struct ShardLayout {
  std::size_t n_shards = 1;
  std::vector<std::size_t> expert_owner;  // expert index -> shard id

  static ShardLayout by_expert_blocks(std::size_t n_shards, std::size_t n_experts);
  static ShardLayout all_on_shard(std::size_t n_shards, std::size_t owner,
                                  std::size_t n_experts);
};

// Owner-rank premixing: when all selected experts of a token live on one
// shard, that shard mixes locally and communicates a single d-sized vector;
// otherwise the token falls back to per-row communication (counted
// separately). Output is bit-identical to the unsharded mix.
std::pair<Tensor, TrafficReport> premix_shard(const ShardLayout& layout,
                                              const std::vector<Tensor>& pool,
                                              const std::vector<jtok_m::RoutingDecision>& decisions,
                                              const AccessTrace& trace);

// Host-to-device transfer volume per batch: unique ids (jtok) or unique
// (id, expert) pairs (jtok_m) times d, summed over layers. Independent of the
// vocabulary size; verified internally by recomputing with V doubled.
TrafficReport offload_volume(PluginKind kind, std::size_t n_layers, std::size_t dim,
                             const AccessTrace& trace,
                             const std::vector<std::vector<std::size_t>>& selections);

// Dependence structure of the lookup pipeline: the earliest stage at which
// each layer's table lookup can issue, versus the layer's write-back stage.
// Single-table lookups depend only on token ids (stage 0); mixture lookups
// need the layer's input state (stage l). Both precede the write-back.
struct PrefetchCheck {
  std::vector<std::size_t> lookup_ready_stage;
  std::vector<std::size_t> writeback_stage;
  bool lookups_precede_writeback = false;
  bool lookups_depend_only_on_ids = false;
};
PrefetchCheck prefetch_check(PluginKind kind, std::size_t n_layers);

}  // namespace tokidx::sim
