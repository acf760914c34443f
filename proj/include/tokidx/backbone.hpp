#pragma once

#include <span>
#include <string>
#include <vector>

#include "tokidx/config.hpp"
#include "tokidx/graph.hpp"
#include "tokidx/tensor.hpp"

namespace tokidx {

// One named parameter tensor with its optimizer state.
struct Param {
  std::string name;
  Tensor value;
  Tensor adam_m;
  Tensor adam_v;
};

// Records top-k routing selections so a forward pass can be replayed with the
// selection sets held fixed (finite-difference checks perturb parameters,
// which must not flip the non-differentiable selection).
struct RoutingTrace {
  bool recording = true;
  std::vector<std::vector<std::vector<std::size_t>>> sites;  // site -> per-token selections
  std::size_t cursor = 0;
};

struct ForwardOut {
  Graph::NodeId ce = -1;         // mean next-token cross-entropy, scalar node
  Graph::NodeId aux = -1;        // load-balance loss node, -1 unless plugin is jtok_m
  Graph::NodeId objective = -1;  // ce (+ aux when present)
  std::vector<double> layer_std;            // std of the hidden state leaving each layer
  std::vector<Graph::NodeId> param_nodes;   // graph leaves aligned with Model::params
  std::vector<Graph::NodeId> delta_r_nodes; // jtok_m residual injections per layer
  Graph::NodeId hidden_final = -1;          // pre-head hidden state [T,d]
};

// Pre-norm Transformer stack with a dense or MoE FFN and an optional
// token-indexed plugin. Parameters live here; the computation graph is
// rebuilt per step by forward().
class Model {
 public:
  static Model init(const ModelConfig& cfg);

  // tokens has length T+1: positions [0,T) are inputs, [1,T+1) targets.
  // Throws on out-of-range ids or empty input.
  ForwardOut forward(Graph& graph, std::span<const int> tokens,
                     RoutingTrace* trace = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;
  bool has_param(const std::string& name) const;

 private:
  ModelConfig cfg_;
  std::vector<Param> params_;

  std::size_t add_param(const std::string& name, Tensor value);
  std::size_t index_of(const std::string& name) const;
};

// Causal attention mask for T positions, row-major [T,T], 1 = attend.
std::vector<std::uint8_t> causal_mask(std::size_t t);

}  // namespace tokidx
