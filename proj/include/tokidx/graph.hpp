#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tokidx/tensor.hpp"

namespace tokidx {

// Reverse-mode autodiff over an explicitly recorded computation graph. The
// graph is rebuilt per training step; nodes are identified by creation index,
// so parents always precede children and the reverse sweep is a single pass.
class Graph {
 public:
  using NodeId = int;

  NodeId leaf(Tensor value, bool requires_grad = false);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // Hadamard
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);     // [m,k] x [k,n]
  NodeId matmul_nt(NodeId a, NodeId b);  // [m,k] x [n,k]^T
  NodeId sigmoid(NodeId a);
  NodeId silu(NodeId a);

  // Per-row RMSNorm with learnable per-dimension weight. x is [T,d] or [d].
  NodeId rmsnorm_rows(NodeId x, NodeId weight, double eps);
  // Per-row u / (||u||_2 + eps) with the full Jacobian of the normalization.
  NodeId l2norm_rows(NodeId u, double eps);

  // Embedding gather: y[t] = table[ids[t]]; backward scatter-adds into the
  // table gradient in trace order.
  NodeId rows_lookup(NodeId table, std::vector<int> ids);

  // y.row(t) = x.row(t) * c[t]; c is [T] or [T,1].
  NodeId row_scale(NodeId x, NodeId c);
  // y.row(t) = x.row(t) ⊙ v; v is [d].
  NodeId row_broadcast_mul(NodeId x, NodeId v);

  // Row-wise softmax restricted to positions with mask != 0; masked positions
  // produce exact zeros. mask has x's shape and is a constant.
  NodeId masked_softmax_rows(NodeId x, std::vector<std::uint8_t> mask);

  NodeId row_sum(NodeId x);             // [T,n] -> [T]
  NodeId row_div(NodeId x, NodeId s);   // y.row(t) = x.row(t) / s[t]
  NodeId col_mean(NodeId x);            // [T,n] -> [n]
  NodeId dot_const(NodeId x, Tensor c);  // scalar [1]

  // Mean next-token cross-entropy from logits [T,V] and targets [T].
  NodeId cross_entropy(NodeId logits, std::vector<int> targets);

  NodeId col_slice(NodeId x, std::size_t j0, std::size_t j1);
  NodeId col_concat(const std::vector<NodeId>& parts);

  // Rotary position encoding over rank-2 [T,dh] (dh even): consecutive dim
  // pairs rotate by t * base^(-2i/dh).
  NodeId rope_rows(NodeId x, double base = 10000.0);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and propagates to every node the root depends
  // on. root must be a scalar (size-1) node.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodeId> parents;
    std::function<void(Graph&, NodeId)> backprop;  // adds into parents' grads
  };

  NodeId emplace(Tensor value, std::vector<NodeId> parents,
                 std::function<void(Graph&, NodeId)> backprop);
  Tensor& grad_ref(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace tokidx
