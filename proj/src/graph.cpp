#include "tokidx/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "tokidx/kernels.hpp"

namespace tokidx {

namespace {

// Numerically stable logistic function.
double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct RowView {
  std::size_t rows, cols;
};

RowView rows_of(const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw std::invalid_argument("graph op expects rank-1 or rank-2 tensor");
}

}  // namespace

Graph::NodeId Graph::emplace(Tensor value, std::vector<NodeId> parents,
                             std::function<void(Graph&, NodeId)> backprop) {
  Node node;
  node.value = std::move(value);
  node.parents = std::move(parents);
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
  NodeId id = emplace(std::move(value), {}, nullptr);
  nodes_[id].requires_grad = requires_grad;
  if (requires_grad) nodes_[id].grad = Tensor::zeros(nodes_[id].value.shape());
  return id;
}

void Graph::backward(NodeId root) {
  if (nodes_[root].value.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar node");
  for (auto& node : nodes_) {
    if (node.grad.size() != 0) node.grad.fill(0.0);
  }
  if (nodes_[root].grad.size() == 0) nodes_[root].grad = Tensor(nodes_[root].value.shape());
  nodes_[root].grad[0] = 1.0;
  for (NodeId id = root; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0) continue;  // nothing flowed into this node
    if (node.backprop) node.backprop(*this, id);
  }
}

namespace {

// Ensures the parent's grad tensor exists before accumulation.
Tensor& acc_grad(Tensor& grad, const Tensor& value) {
  if (grad.size() == 0) grad = Tensor::zeros(value.shape());
  return grad;
}

}  // namespace

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
  Tensor out = tokidx::add(value(a), value(b));
  return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    add_inplace(acc_grad(g.grad_ref(a), g.value(a)), gout);
    add_inplace(acc_grad(g.grad_ref(b), g.value(b)), gout);
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = hadamard(value(a), value(b));
  return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    add_inplace(acc_grad(g.grad_ref(a), g.value(a)), hadamard(gout, g.value(b)));
    add_inplace(acc_grad(g.grad_ref(b), g.value(b)), hadamard(gout, g.value(a)));
  });
}

Graph::NodeId Graph::scale(NodeId a, double c) {
  Tensor out = tokidx::scale(value(a), c);
  return emplace(std::move(out), {a}, [a, c](Graph& g, NodeId self) {
    axpy_inplace(acc_grad(g.grad_ref(a), g.value(a)), c, g.grad(self));
  });
}

Graph::NodeId Graph::add_const(NodeId a, double c) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
  return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
    add_inplace(acc_grad(g.grad_ref(a), g.value(a)), g.grad(self));
  });
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  Tensor out = tokidx::matmul(value(a), value(b));
  return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    add_inplace(acc_grad(g.grad_ref(a), g.value(a)), tokidx::matmul_nt(gout, g.value(b)));
    add_inplace(acc_grad(g.grad_ref(b), g.value(b)), tokidx::matmul_tn(g.value(a), gout));
  });
}

Graph::NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  Tensor out = tokidx::matmul_nt(value(a), value(b));
  return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    add_inplace(acc_grad(g.grad_ref(a), g.value(a)), tokidx::matmul(gout, g.value(b)));
    add_inplace(acc_grad(g.grad_ref(b), g.value(b)), tokidx::matmul_tn(gout, g.value(a)));
  });
}

Graph::NodeId Graph::sigmoid(NodeId a) {
  Tensor out(value(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(value(a)[i]);
  return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
    const Tensor& y = g.value(self);
    const Tensor& gout = g.grad(self);
    Tensor& ga = acc_grad(g.grad_ref(a), g.value(a));
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += gout[i] * y[i] * (1.0 - y[i]);
  });
}

Graph::NodeId Graph::silu(NodeId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sigmoid_scalar(x[i]);
  return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
    const Tensor& x = g.value(a);
    const Tensor& gout = g.grad(self);
    Tensor& ga = acc_grad(g.grad_ref(a), g.value(a));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = sigmoid_scalar(x[i]);
      ga[i] += gout[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Graph::NodeId Graph::rmsnorm_rows(NodeId x, NodeId weight, double eps) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  const auto [T, d] = rows_of(xv);
  if (wv.rank() != 1 || wv.size() != d)
    throw std::invalid_argument("rmsnorm_rows: weight must be rank-1 of the row width");
  Tensor out(xv.shape());
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = xv.data() + t * d;
    double* yr = out.data() + t * d;
    const double ms = kern::active().dot(xr, xr, d) / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(ms + eps);
    for (std::size_t i = 0; i < d; ++i) yr[i] = wv[i] * (xr[i] * inv);
  }
  return emplace(std::move(out), {x, weight}, [x, weight, eps](Graph& g, NodeId self) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(weight);
    const Tensor& gout = g.grad(self);
    const auto [T, d] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    Tensor& gw = acc_grad(g.grad_ref(weight), wv);
    for (std::size_t t = 0; t < T; ++t) {
      const double* xr = xv.data() + t * d;
      const double* gr = gout.data() + t * d;
      double* gxr = gx.data() + t * d;
      const double ms = kern::active().dot(xr, xr, d) / static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(ms + eps);
      double inner = 0.0;  // sum_i g_i * w_i * x_i
      for (std::size_t i = 0; i < d; ++i) inner += gr[i] * wv[i] * xr[i];
      const double coef = inv * inv * inv * inner / static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) {
        gxr[i] += inv * wv[i] * gr[i] - coef * xr[i];
        gw[i] += gr[i] * xr[i] * inv;
      }
    }
  });
}

Graph::NodeId Graph::l2norm_rows(NodeId u, double eps) {
  const Tensor& uv = value(u);
  const auto [T, d] = rows_of(uv);
  Tensor out(uv.shape());
  for (std::size_t t = 0; t < T; ++t) {
    const double* ur = uv.data() + t * d;
    double* yr = out.data() + t * d;
    const double norm = std::sqrt(kern::active().dot(ur, ur, d));
    const double den = norm + eps;
    if (den == 0.0) {
      for (std::size_t i = 0; i < d; ++i) yr[i] = 0.0;
    } else {
      const double inv = 1.0 / den;
      for (std::size_t i = 0; i < d; ++i) yr[i] = ur[i] * inv;
    }
  }
  return emplace(std::move(out), {u}, [u, eps](Graph& g, NodeId self) {
    const Tensor& uv = g.value(u);
    const Tensor& gout = g.grad(self);
    const auto [T, d] = rows_of(uv);
    Tensor& gu = acc_grad(g.grad_ref(u), uv);
    for (std::size_t t = 0; t < T; ++t) {
      const double* ur = uv.data() + t * d;
      const double* gr = gout.data() + t * d;
      double* gur = gu.data() + t * d;
      const double norm = std::sqrt(kern::active().dot(ur, ur, d));
      const double den = norm + eps;
      if (den == 0.0) continue;  // output was identically zero
      if (norm == 0.0) {
        // At u = 0 the normalization is differentiable with Jacobian I/eps.
        for (std::size_t i = 0; i < d; ++i) gur[i] += gr[i] / den;
        continue;
      }
      const double s = kern::active().dot(gr, ur, d);
      const double coef = s / (norm * den * den);
      const double inv = 1.0 / den;
      for (std::size_t i = 0; i < d; ++i) gur[i] += gr[i] * inv - ur[i] * coef;
    }
  });
}

Graph::NodeId Graph::rows_lookup(NodeId table, std::vector<int> ids) {
  const Tensor& tab = value(table);
  if (tab.rank() != 2) throw std::invalid_argument("rows_lookup: table must be rank-2");
  const std::size_t V = tab.rows(), d = tab.cols();
  Tensor out({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= V)
      throw std::out_of_range("rows_lookup: token id out of range");
    const double* src = tab.row(static_cast<std::size_t>(ids[t]));
    double* dst = out.row(t);
    for (std::size_t i = 0; i < d; ++i) dst[i] = src[i];
  }
  return emplace(std::move(out), {table},
                 [table, ids = std::move(ids)](Graph& g, NodeId self) {
                   const Tensor& gout = g.grad(self);
                   Tensor& gt = acc_grad(g.grad_ref(table), g.value(table));
                   const std::size_t d = gt.cols();
                   for (std::size_t t = 0; t < ids.size(); ++t) {
                     kern::active().axpy(1.0, gout.row(t),
                                         gt.row(static_cast<std::size_t>(ids[t])), d);
                   }
                 });
}

Graph::NodeId Graph::row_scale(NodeId x, NodeId c) {
  const Tensor& xv = value(x);
  const Tensor& cv = value(c);
  const auto [T, d] = rows_of(xv);
  if (cv.size() != T) throw std::invalid_argument("row_scale: scale length must match rows");
  Tensor out(xv.shape());
  for (std::size_t t = 0; t < T; ++t)
    kern::active().scale(xv.data() + t * d, cv[t], out.data() + t * d, d);
  return emplace(std::move(out), {x, c}, [x, c](Graph& g, NodeId self) {
    const Tensor& xv = g.value(x);
    const Tensor& cv = g.value(c);
    const Tensor& gout = g.grad(self);
    const auto [T, d] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    Tensor& gc = acc_grad(g.grad_ref(c), cv);
    for (std::size_t t = 0; t < T; ++t) {
      kern::active().axpy(cv[t], gout.data() + t * d, gx.data() + t * d, d);
      gc[t] += kern::active().dot(gout.data() + t * d, xv.data() + t * d, d);
    }
  });
}

Graph::NodeId Graph::row_broadcast_mul(NodeId x, NodeId v) {
  const Tensor& xv = value(x);
  const Tensor& vv = value(v);
  const auto [T, d] = rows_of(xv);
  if (vv.rank() != 1 || vv.size() != d)
    throw std::invalid_argument("row_broadcast_mul: vector must be rank-1 of row width");
  Tensor out(xv.shape());
  for (std::size_t t = 0; t < T; ++t)
    kern::active().mul(xv.data() + t * d, vv.data(), out.data() + t * d, d);
  return emplace(std::move(out), {x, v}, [x, v](Graph& g, NodeId self) {
    const Tensor& xv = g.value(x);
    const Tensor& vv = g.value(v);
    const Tensor& gout = g.grad(self);
    const auto [T, d] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    Tensor& gv = acc_grad(g.grad_ref(v), vv);
    for (std::size_t t = 0; t < T; ++t) {
      const double* gr = gout.data() + t * d;
      const double* xr = xv.data() + t * d;
      double* gxr = gx.data() + t * d;
      for (std::size_t i = 0; i < d; ++i) {
        gxr[i] += gr[i] * vv[i];
        gv[i] += gr[i] * xr[i];
      }
    }
  });
}

Graph::NodeId Graph::masked_softmax_rows(NodeId x, std::vector<std::uint8_t> mask) {
  const Tensor& xv = value(x);
  const auto [T, n] = rows_of(xv);
  if (mask.size() != xv.size())
    throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
  Tensor out(xv.shape());
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = xv.data() + t * n;
    const std::uint8_t* mr = mask.data() + t * n;
    double* yr = out.data() + t * n;
    double mx = -1.0 / 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mr[j] && xr[j] > mx) mx = xr[j];
    if (!(mx > -1.0 / 0.0))
      throw std::invalid_argument("masked_softmax_rows: a row has no unmasked entries");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = mr[j] ? std::exp(xr[j] - mx) : 0.0;
      z += yr[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
  return emplace(std::move(out), {x}, [x](Graph& g, NodeId self) {
    const Tensor& y = g.value(self);
    const Tensor& gout = g.grad(self);
    const auto [T, n] = rows_of(y);
    Tensor& gx = acc_grad(g.grad_ref(x), g.value(x));
    for (std::size_t t = 0; t < T; ++t) {
      const double* yr = y.data() + t * n;
      const double* gr = gout.data() + t * n;
      double* gxr = gx.data() + t * n;
      const double inner = kern::active().dot(gr, yr, n);
      for (std::size_t j = 0; j < n; ++j) gxr[j] += yr[j] * (gr[j] - inner);
    }
  });
}

Graph::NodeId Graph::row_sum(NodeId x) {
  const Tensor& xv = value(x);
  const auto [T, n] = rows_of(xv);
  Tensor out({T});
  for (std::size_t t = 0; t < T; ++t) out[t] = kern::active().sum(xv.data() + t * n, n);
  return emplace(std::move(out), {x}, [x](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    const Tensor& xv = g.value(x);
    const auto [T, n] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    for (std::size_t t = 0; t < T; ++t) {
      double* gxr = gx.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) gxr[j] += gout[t];
    }
  });
}

Graph::NodeId Graph::row_div(NodeId x, NodeId s) {
  const Tensor& xv = value(x);
  const Tensor& sv = value(s);
  const auto [T, n] = rows_of(xv);
  if (sv.size() != T) throw std::invalid_argument("row_div: divisor length must match rows");
  Tensor out(xv.shape());
  for (std::size_t t = 0; t < T; ++t)
    kern::active().scale(xv.data() + t * n, 1.0 / sv[t], out.data() + t * n, n);
  return emplace(std::move(out), {x, s}, [x, s](Graph& g, NodeId self) {
    const Tensor& xv = g.value(x);
    const Tensor& sv = g.value(s);
    const Tensor& gout = g.grad(self);
    const auto [T, n] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    Tensor& gs = acc_grad(g.grad_ref(s), sv);
    for (std::size_t t = 0; t < T; ++t) {
      const double inv = 1.0 / sv[t];
      kern::active().axpy(inv, gout.data() + t * n, gx.data() + t * n, n);
      const double num = kern::active().dot(gout.data() + t * n, xv.data() + t * n, n);
      gs[t] += -num * inv * inv;
    }
  });
}

Graph::NodeId Graph::col_mean(NodeId x) {
  const Tensor& xv = value(x);
  const auto [T, n] = rows_of(xv);
  Tensor out({n});
  for (std::size_t t = 0; t < T; ++t) kern::active().axpy(1.0, xv.data() + t * n, out.data(), n);
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(T);
  return emplace(std::move(out), {x}, [x](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    const Tensor& xv = g.value(x);
    const auto [T, n] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    const double invT = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t)
      kern::active().axpy(invT, gout.data(), gx.data() + t * n, n);
  });
}

Graph::NodeId Graph::dot_const(NodeId x, Tensor c) {
  const Tensor& xv = value(x);
  if (xv.size() != c.size()) throw std::invalid_argument("dot_const: size mismatch");
  Tensor out({1});
  out[0] = kern::active().dot(xv.data(), c.data(), xv.size());
  return emplace(std::move(out), {x}, [x, c = std::move(c)](Graph& g, NodeId self) {
    const double g0 = g.grad(self)[0];
    Tensor& gx = acc_grad(g.grad_ref(x), g.value(x));
    kern::active().axpy(g0, c.data(), gx.data(), gx.size());
  });
}

Graph::NodeId Graph::cross_entropy(NodeId logits, std::vector<int> targets) {
  const Tensor& lv = value(logits);
  const auto [T, V] = rows_of(lv);
  if (targets.size() != T)
    throw std::invalid_argument("cross_entropy: one target per logits row required");
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const int tgt = targets[t];
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= V)
      throw std::out_of_range("cross_entropy: target id out of range");
    const double* lr = lv.data() + t * V;
    double mx = lr[0];
    for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, lr[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) z += std::exp(lr[j] - mx);
    total += (mx + std::log(z)) - lr[static_cast<std::size_t>(tgt)];
  }
  Tensor out({1});
  out[0] = total / static_cast<double>(T);
  return emplace(std::move(out), {logits},
                 [logits, targets = std::move(targets)](Graph& g, NodeId self) {
                   const Tensor& lv = g.value(logits);
                   const auto [T, V] = rows_of(lv);
                   const double g0 = g.grad(self)[0] / static_cast<double>(T);
                   Tensor& gl = acc_grad(g.grad_ref(logits), lv);
                   for (std::size_t t = 0; t < T; ++t) {
                     const double* lr = lv.data() + t * V;
                     double* gr = gl.data() + t * V;
                     double mx = lr[0];
                     for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, lr[j]);
                     double z = 0.0;
                     for (std::size_t j = 0; j < V; ++j) z += std::exp(lr[j] - mx);
                     const double inv = 1.0 / z;
                     for (std::size_t j = 0; j < V; ++j)
                       gr[j] += g0 * std::exp(lr[j] - mx) * inv;
                     gr[static_cast<std::size_t>(targets[t])] -= g0;
                   }
                 });
}

Graph::NodeId Graph::col_slice(NodeId x, std::size_t j0, std::size_t j1) {
  const Tensor& xv = value(x);
  const auto [T, n] = rows_of(xv);
  if (j0 >= j1 || j1 > n) throw std::invalid_argument("col_slice: bad column range");
  const std::size_t w = j1 - j0;
  Tensor out({T, w});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < w; ++j) out.at(t, j) = xv.data()[t * n + j0 + j];
  return emplace(std::move(out), {x}, [x, j0, w](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    const Tensor& xv = g.value(x);
    const auto [T, n] = rows_of(xv);
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < w; ++j) gx.data()[t * n + j0 + j] += gout.at(t, j);
  });
}

Graph::NodeId Graph::col_concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("col_concat: no parts");
  const std::size_t T = rows_of(value(parts[0])).rows;
  std::size_t total = 0;
  for (NodeId p : parts) {
    const auto rv = rows_of(value(p));
    if (rv.rows != T) throw std::invalid_argument("col_concat: row count mismatch");
    total += rv.cols;
  }
  Tensor out({T, total});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (NodeId p : parts) {
    const Tensor& pv = value(p);
    const auto rv = rows_of(pv);
    offsets.push_back(off);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < rv.cols; ++j) out.at(t, off + j) = pv.data()[t * rv.cols + j];
    off += rv.cols;
  }
  return emplace(std::move(out), parts,
                 [parts, offsets, total](Graph& g, NodeId self) {
                   const Tensor& gout = g.grad(self);
                   const std::size_t T = rows_of(gout).rows;
                   for (std::size_t k = 0; k < parts.size(); ++k) {
                     const Tensor& pv = g.value(parts[k]);
                     const auto rv = rows_of(pv);
                     Tensor& gp = acc_grad(g.grad_ref(parts[k]), pv);
                     for (std::size_t t = 0; t < T; ++t)
                       for (std::size_t j = 0; j < rv.cols; ++j)
                         gp.data()[t * rv.cols + j] += gout.data()[t * total + offsets[k] + j];
                   }
                 });
}

Graph::NodeId Graph::rope_rows(NodeId x, double base) {
  const Tensor& xv = value(x);
  const auto [T, d] = rows_of(xv);
  if (d % 2 != 0) throw std::invalid_argument("rope_rows: row width must be even");
  Tensor out(xv.shape());
  const std::size_t half = d / 2;
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = xv.data() + t * d;
    double* yr = out.data() + t * d;
    for (std::size_t i = 0; i < half; ++i) {
      const double theta = static_cast<double>(t) *
                           std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double c = std::cos(theta), s = std::sin(theta);
      const double x0 = xr[2 * i], x1 = xr[2 * i + 1];
      yr[2 * i] = c * x0 - s * x1;
      yr[2 * i + 1] = s * x0 + c * x1;
    }
  }
  return emplace(std::move(out), {x}, [x, base](Graph& g, NodeId self) {
    const Tensor& gout = g.grad(self);
    const Tensor& xv = g.value(x);
    const auto [T, d] = rows_of(xv);
    const std::size_t half = d / 2;
    Tensor& gx = acc_grad(g.grad_ref(x), xv);
    for (std::size_t t = 0; t < T; ++t) {
      const double* gr = gout.data() + t * d;
      double* gxr = gx.data() + t * d;
      for (std::size_t i = 0; i < half; ++i) {
        const double theta =
            static_cast<double>(t) *
            std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        const double c = std::cos(theta), s = std::sin(theta);
        const double g0 = gr[2 * i], g1 = gr[2 * i + 1];
        gxr[2 * i] += c * g0 + s * g1;
        gxr[2 * i + 1] += -s * g0 + c * g1;
      }
    }
  });
}

}  // namespace tokidx
