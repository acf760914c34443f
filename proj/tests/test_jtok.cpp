#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tokidx/grad_check.hpp"
#include "tokidx/graph.hpp"
#include "tokidx/jtok.hpp"
#include "tokidx/rng.hpp"

using namespace tokidx;
using jtok::JTokLayer;

namespace {

JTokLayer random_layer(Rng& rng, std::size_t vocab, std::size_t dim, double row_scale = 0.4) {
  JTokLayer layer;
  layer.table = Tensor::random_normal({vocab, dim}, rng, 0.0, row_scale);
  layer.scaler = Tensor::random_normal({dim}, rng, 0.0, 0.5);
  return layer;
}

ModelConfig plugin_config() {
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.hidden_dim = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.ffn_dim = 12;
  cfg.seq_len = 4;
  cfg.plugin = PluginKind::kJtok;
  return cfg;
}

}  // namespace

TEST_CASE("gate_vector: zero table row gives the identity gate") {
  JTokLayer layer;
  layer.table = Tensor::zeros({4, 3});
  layer.scaler = Tensor::vec({0.7, -0.3, 2.0});
  const Tensor p = jtok::gate_vector(layer, 2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == 1.0);
}

TEST_CASE("gate_vector: zero scaler gives the identity gate regardless of the table") {
  Rng rng(1);
  JTokLayer layer = random_layer(rng, 4, 3);
  layer.scaler = Tensor::zeros({3});
  for (int x = 0; x < 4; ++x) {
    const Tensor p = jtok::gate_vector(layer, x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == 1.0);
  }
}

TEST_CASE("gate_vector: 3-4-5 normalization oracle") {
  JTokLayer layer;
  layer.table = Tensor({1, 2}, {3.0, 4.0});
  layer.scaler = Tensor::vec({1.0, 1.0});
  layer.eps = 0.0;
  const Tensor p = jtok::gate_vector(layer, 0);
  CHECK(p[0] == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.8).epsilon(1e-15));
}

TEST_CASE("gate_vector: out-of-range id throws") {
  Rng rng(2);
  JTokLayer layer = random_layer(rng, 4, 3);
  CHECK_THROWS_AS(jtok::gate_vector(layer, 4), std::out_of_range);
  CHECK_THROWS_AS(jtok::gate_vector(layer, -1), std::out_of_range);
}

TEST_CASE("apply_gate: identity gate recovers the plain residual update") {
  Rng rng(3);
  const Tensor dm = Tensor::random_normal({6}, rng, 0.0, 1.0);
  const Tensor at = Tensor::random_normal({6}, rng, 0.0, 1.0);
  const Tensor ones = Tensor::full({6}, 1.0);
  const Tensor h_next = jtok::apply_gate(dm, ones, at);
  const Tensor plain = add(at, dm);
  CHECK(bit_equal(h_next, plain));
}

TEST_CASE("apply_gate: zero update passes a_tilde through") {
  Rng rng(4);
  const Tensor at = Tensor::random_normal({6}, rng, 0.0, 1.0);
  const Tensor p = Tensor::random_normal({6}, rng, 1.0, 0.3);
  const Tensor h_next = jtok::apply_gate(Tensor::zeros({6}), p, at);
  for (std::size_t i = 0; i < 6; ++i) CHECK(h_next[i] == at[i]);
}

TEST_CASE("apply_gate: elementwise product oracle") {
  const Tensor h_next = jtok::apply_gate(Tensor::vec({1.0, 2.0}), Tensor::vec({1.6, 1.8}),
                                         Tensor::vec({0.0, 0.0}));
  CHECK(h_next[0] == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(h_next[1] == doctest::Approx(3.6).epsilon(1e-15));
}

TEST_CASE("gate bound: |p - 1| never exceeds max |s_i|") {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    JTokLayer layer = random_layer(rng, 8, 6, rng.uniform(0.001, 2.0));
    double s_max = 0.0;
    for (std::size_t i = 0; i < 6; ++i) s_max = std::max(s_max, std::fabs(layer.scaler[i]));
    for (int x = 0; x < 8; ++x) {
      const Tensor p = jtok::gate_vector(layer, x);
      for (std::size_t i = 0; i < 6; ++i)
        CHECK(std::fabs(p[i] - 1.0) <= s_max * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("hypersphere property: normalized row norm is ||u||/(||u||+eps)") {
  Rng rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    const Tensor u = Tensor::random_normal({5}, rng, 0.0, rng.uniform(0.01, 3.0));
    const double eps = 1e-6;
    const Tensor n = l2norm_eps(u, eps);
    const double expected = l2_norm(u) / (l2_norm(u) + eps);
    CHECK(l2_norm(n) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(l2_norm(n) > 0.0);
    CHECK(l2_norm(n) <= 1.0);
  }
}

TEST_CASE("token locality: editing another row leaves this token's gate unchanged") {
  Rng rng(7);
  JTokLayer layer = random_layer(rng, 8, 6);
  const Tensor before = jtok::gate_vector(layer, 3);
  for (std::size_t j = 0; j < 6; ++j) layer.table.at(5, j) += 10.0;
  const Tensor after = jtok::gate_vector(layer, 3);
  CHECK(bit_equal(before, after));
}

TEST_CASE("no_norm ablation switches the gate to 1 + s*E[x]") {
  JTokLayer layer;
  layer.table = Tensor({1, 2}, {3.0, 4.0});
  layer.scaler = Tensor::vec({0.5, 0.25});
  layer.no_norm = true;
  const Tensor p = jtok::gate_vector(layer, 0);
  CHECK(p[0] == doctest::Approx(1.0 + 0.5 * 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 + 0.25 * 4.0).epsilon(1e-15));
}

TEST_CASE("backward: zero scaler sends exactly zero gradient to the table") {
  Rng rng(8);
  const std::size_t V = 6, d = 8, T = 3;
  Tensor table = Tensor::random_normal({V, d}, rng, 0.0, 0.3);
  Tensor scaler = Tensor::zeros({d});
  Tensor dm = Tensor::random_normal({T, d}, rng, 0.0, 1.0);
  Tensor at = Tensor::random_normal({T, d}, rng, 0.0, 1.0);
  const std::vector<int> ids = {1, 4, 1};
  Tensor probe = Tensor::random_normal({T, d}, rng, 0.0, 1.0);

  Graph g;
  auto tn = g.leaf(table, true);
  auto sn = g.leaf(scaler, true);
  auto gate = g.add_const(
      g.row_broadcast_mul(g.l2norm_rows(g.rows_lookup(tn, ids), 1e-6), sn), 1.0);
  auto h_next = g.add(g.leaf(at, false), g.mul(g.leaf(dm, false), gate));
  g.backward(g.dot_const(h_next, probe));
  const Tensor& gt = g.grad(tn);
  for (std::size_t i = 0; i < gt.size(); ++i) CHECK(gt[i] == 0.0);
}

TEST_CASE("backward: gate chain passes the finite-difference oracle on random instances") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 120; ++seed) {
    Rng rng(seed * 13);
    const std::size_t V = 6, d = 8, T = 3;
    Tensor table = Tensor::random_normal({V, d}, rng, 0.0, 0.4);
    Tensor scaler = Tensor::random_normal({d}, rng, 0.0, 0.5);
    Tensor dm = Tensor::random_normal({T, d}, rng, 0.0, 1.0);
    Tensor at = Tensor::random_normal({T, d}, rng, 0.0, 1.0);
    std::vector<int> ids(T);
    for (auto& x : ids) x = static_cast<int>(rng.pick(V));
    Tensor probe = Tensor::random_normal({T, d}, rng, 0.0, 1.0);

    auto build = [&](Graph& g, bool want_grads) {
      auto tn = g.leaf(table, want_grads);
      auto sn = g.leaf(scaler, want_grads);
      auto dn = g.leaf(dm, want_grads);
      auto an = g.leaf(at, want_grads);
      auto gate = g.add_const(
          g.row_broadcast_mul(g.l2norm_rows(g.rows_lookup(tn, ids), 1e-6), sn), 1.0);
      auto h_next = g.add(an, g.mul(dn, gate));
      auto loss = g.dot_const(h_next, probe);
      return std::tuple(tn, sn, dn, an, loss);
    };

    Graph g;
    auto [tn, sn, dn, an, loss] = build(g, true);
    g.backward(loss);
    std::vector<Tensor> analytic = {g.grad(tn), g.grad(sn), g.grad(dn), g.grad(an)};
    auto eval = [&]() {
      Graph g2;
      auto [t2, s2, d2, a2, l2] = build(g2, false);
      return g2.value(l2)[0];
    };
    const double err = grad_check(eval, {&table, &scaler, &dm, &at}, analytic, 1e-5);
    CAPTURE(seed);
    CHECK(err < 1e-5);
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("backward: zero row with eps has gradient s/eps scaled by the chain") {
  // At E[x] = 0 the normalization Jacobian is I/eps, so the table-row
  // gradient equals (upstream ⊙ dm ⊙ s) / eps.
  Rng rng(9);
  const std::size_t d = 4;
  const double eps = 0.1;  // the step must stay far below eps for the oracle
  Tensor table = Tensor::zeros({2, d});
  Tensor scaler = Tensor::random_normal({d}, rng, 0.0, 0.5);
  Tensor dm = Tensor::random_normal({1, d}, rng, 0.0, 1.0);
  Tensor at = Tensor::zeros({1, d});
  const std::vector<int> ids = {0};
  Tensor probe = Tensor::random_normal({1, d}, rng, 0.0, 1.0);

  auto build = [&](Graph& g, bool want) {
    auto tn = g.leaf(table, want);
    auto gate = g.add_const(
        g.row_broadcast_mul(g.l2norm_rows(g.rows_lookup(tn, ids), eps),
                            g.leaf(scaler, false)),
        1.0);
    auto loss = g.dot_const(g.add(g.leaf(at, false), g.mul(g.leaf(dm, false), gate)), probe);
    return std::pair(tn, loss);
  };
  Graph g;
  auto [tn, loss] = build(g, true);
  g.backward(loss);
  for (std::size_t j = 0; j < d; ++j)
    CHECK(g.grad(tn).at(0, j) ==
          doctest::Approx(probe[j] * dm[j] * scaler[j] / eps).epsilon(1e-12));
  std::vector<Tensor> analytic = {g.grad(tn)};
  auto eval = [&]() {
    Graph g2;
    return g2.value(build(g2, false).second)[0];
  };
  CHECK(grad_check(eval, {&table}, analytic, 1e-6) < 1e-5);
}

TEST_CASE("identity recovery: zero tables make the full model match the backbone bitwise") {
  ModelConfig with_plugin = plugin_config();
  ModelConfig without = with_plugin;
  without.plugin = PluginKind::kNone;

  Model a = Model::init(with_plugin);
  Model b = Model::init(without);
  for (std::size_t l = 0; l < with_plugin.n_layers; ++l)
    a.param("L" + std::to_string(l) + ".jtok.table").value.fill(0.0);

  Rng rng(10);
  std::vector<int> tokens(with_plugin.seq_len + 1);
  for (auto& x : tokens) x = static_cast<int>(rng.pick(with_plugin.vocab_size));
  Graph ga, gb;
  const auto oa = a.forward(ga, tokens);
  const auto ob = b.forward(gb, tokens);
  CHECK(ga.value(oa.ce)[0] == gb.value(ob.ce)[0]);
  CHECK(bit_equal(ga.value(oa.hidden_final), gb.value(ob.hidden_final)));

  // Scaler-only identity: random tables, zero scaler (the init state).
  Model c = Model::init(with_plugin);
  Graph gc;
  const auto oc = c.forward(gc, tokens);
  CHECK(gc.value(oc.ce)[0] == gb.value(ob.ce)[0]);
}

TEST_CASE("full jtok model passes the gradient oracle") {
  for (std::uint64_t seed : {2u, 3u, 4u, 6u}) {
    ModelConfig cfg = plugin_config();
    cfg.seed = seed;
    Model m = Model::init(cfg);
    Rng rng(seed * 7 + 1);
    for (Param& p : m.params())
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.uniform(-0.5, 0.5);
    std::vector<int> tokens(cfg.seq_len + 1);
    for (auto& x : tokens) x = static_cast<int>(rng.pick(cfg.vocab_size));
    CAPTURE(seed);
    CHECK(model_grad_check(m, tokens, 1e-4) < 1e-5);
  }
}
