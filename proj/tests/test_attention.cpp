#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pn/attention.hpp"
#include "pn/gradcheck.hpp"

using namespace pn;

namespace {

LocalLayerParams random_local(Rng& r, int d, int heads) {
  LocalLayerParams p;
  p.w_v = r.normal_matrix(d, d, 0.6);
  p.w_h = r.normal_matrix(d, d, 0.6);
  p.beta = r.normal_matrix(1, d, 0.5);
  p.a_src = r.normal_matrix(heads, d / heads, 0.6);
  p.a_dst = r.normal_matrix(heads, d / heads, 0.6);
  p.ln_gain = r.uniform_matrix(1, d, 0.5, 1.5);
  p.ln_shift = r.normal_matrix(1, d, 0.2);
  return p;
}

GlobalLayerParams random_global(Rng& r, int d) {
  GlobalLayerParams p;
  p.w_q = r.normal_matrix(d, d, 0.6);
  p.w_k = r.normal_matrix(d, d, 0.6);
  p.w_v = r.normal_matrix(d, d, 0.6);
  p.w_h = r.normal_matrix(d, d, 0.6);
  p.beta = r.normal_matrix(1, d, 0.5);
  p.ln_gain = r.uniform_matrix(1, d, 0.5, 1.5);
  p.ln_shift = r.normal_matrix(1, d, 0.2);
  return p;
}

Value ones_carrier(Tape& t, int n) { return t.leaf(Matrix::filled(n, 1, 1.0)); }

}  // namespace

TEST_CASE("gat attention") {
  SUBCASE("single node with self loop gets weight one") {
    Graph g;
    g.n = 1;
    g.row_offsets = {0, 0};
    GraphContext ctx = make_graph_context(g);
    Rng r(1);
    Tape t;
    LocalLayerValues p = bind(t, random_local(r, 2, 1));
    SparseAttention att = gat_attention(t, ctx, t.leaf(r.normal_matrix(1, 2)), p, 0, 1);
    CHECK(att.edge_values.val()(0, 0) == 1.0);
  }
  SUBCASE("two identical nodes split attention evenly") {
    Graph g = graph_from_edges(2, {{0, 1}});
    GraphContext ctx = make_graph_context(g);
    Rng r(2);
    Matrix x(2, 2, {0.7, -0.3, 0.7, -0.3});
    Tape t;
    LocalLayerValues p = bind(t, random_local(r, 2, 1));
    SparseAttention att = gat_attention(t, ctx, t.leaf(x), p, 0, 1);
    for (int e = 0; e < 4; ++e) CHECK(att.edge_values.val()(e, 0) == doctest::Approx(0.5));
  }
  SUBCASE("rows sum to one per destination") {
    Graph g = gen_er(12, 0.4, 3);
    GraphContext ctx = make_graph_context(g);
    Rng r(3);
    Tape t;
    LocalLayerValues p = bind(t, random_local(r, 4, 2));
    SparseAttention att = gat_attention(t, ctx, t.leaf(r.normal_matrix(12, 4)), p, 1, 2);
    const Matrix& vals = att.edge_values.val();
    for (int i = 0; i < 12; ++i) {
      double s = 0.0;
      for (int e = ctx.attn_pattern.row_offsets[i]; e < ctx.attn_pattern.row_offsets[i + 1]; ++e)
        s += vals(e, 0);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("local layer") {
  SUBCASE("single-node hand evaluation") {
    // A = [1], V = [2], H = [3], beta = 0 so the gate is one half; the 1x1
    // layer norm row collapses to zero, leaving 0.5 * 0 + 0.5 * 2 = 1.
    Graph g;
    g.n = 1;
    g.row_offsets = {0, 0};
    GraphContext ctx = make_graph_context(g);
    Tape t;
    LocalLayerParams p;
    p.w_v = Matrix(1, 1, {2.0});
    p.w_h = Matrix(1, 1, {3.0});
    p.beta = Matrix(1, 1, {0.0});
    p.a_src = Matrix(1, 1, {0.4});
    p.a_dst = Matrix(1, 1, {-0.9});
    p.ln_gain = Matrix(1, 1, {1.0});
    p.ln_shift = Matrix(1, 1, {0.0});
    Value out = local_layer(t, ctx, t.leaf(Matrix(1, 1, {1.0})), bind(t, p), 1,
                            ones_carrier(t, 1));
    CHECK(out.val()(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("saturated gate reduces to the attention branch") {
    Graph g = gen_er(8, 0.5, 4);
    GraphContext ctx = make_graph_context(g);
    Rng r(5);
    const int d = 4;
    LocalLayerParams p = random_local(r, d, 2);
    p.beta = Matrix::filled(1, d, 20.0);
    Matrix x = r.normal_matrix(8, d);

    Tape t;
    LocalLayerValues pv = bind(t, p);
    Value out = local_layer(t, ctx, t.leaf(x), pv, 2, ones_carrier(t, 8));
    // attention branch alone
    Tape t2;
    LocalLayerValues pv2 = bind(t2, p);
    Value z = t2.matmul(t2.leaf(x), pv2.w_v);
    Value av;
    {
      const int dh = d / 2;
      for (int h = 0; h < 2; ++h) {
        Value z_h = t2.slice_cols(z, h * dh, (h + 1) * dh);
        SparseAttention att = gat_attention(t2, ctx, t2.leaf(x), pv2, h, 2);
        Value o = t2.spmm(*att.pattern, att.edge_values, z_h);
        av = h == 0 ? o : t2.concat_cols(av, o);
      }
    }
    CHECK(max_abs_diff(out.val(), av.val()) < 1e-6);
  }
  SUBCASE("gradients pass the central-difference check") {
    Rng r(6);
    Graph g = gen_er(5, 0.6, 7);
    GraphContext ctx = make_graph_context(g);
    const int d = 4, heads = 2;
    LocalLayerParams p = random_local(r, d, heads);
    std::vector<NamedMatrix> params = {{"x", r.normal_matrix(5, d)}, {"w_v", p.w_v},
                                       {"w_h", p.w_h},   {"beta", p.beta},
                                       {"a_src", p.a_src}, {"a_dst", p.a_dst},
                                       {"ln_gain", p.ln_gain}, {"ln_shift", p.ln_shift}};
    double err = grad_check(
        [&](Tape& t, const std::vector<Value>& v) {
          LocalLayerValues lv{v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
          return t.sum_all(t.sigmoid(local_layer(t, ctx, v[0], lv, heads, ones_carrier(t, 5))));
        },
        params, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("global layer and kernel identity") {
  SUBCASE("single node returns its value projection exactly") {
    Rng r(8);
    const int d = 6;
    GlobalLayerParams p = random_global(r, d);
    Matrix x = r.normal_matrix(1, d);
    Tape t;
    GlobalLayerValues pv = bind(t, p);
    Matrix out = global_attention_output(t, t.leaf(x), pv, 3).val();
    Matrix v = matmul(x, p.w_v);
    CHECK(max_abs_diff(out, v) < 1e-14);
  }
  SUBCASE("factorized output matches the dense oracle") {
    Rng r(9);
    for (int trial = 0; trial < 5; ++trial) {
      const int n = r.uniform_int(2, 50);
      const int heads = trial % 2 ? 2 : 1;
      const int d = 8;
      GlobalLayerParams p = random_global(r, d);
      Matrix x = r.normal_matrix(n, d);
      Tape t;
      GlobalLayerValues pv = bind(t, p);
      Value xv = t.leaf(x);
      CHECK(max_abs_diff(global_attention_output(t, xv, pv, heads).val(),
                         dense_kernel_attention_oracle(t, xv, pv, heads).val()) < 1e-10);
    }
  }
  SUBCASE("oracle rejects oversized instances") {
    Rng r(10);
    GlobalLayerParams p = random_global(r, 2);
    Tape t;
    GlobalLayerValues pv = bind(t, p);
    CHECK_THROWS_AS(dense_kernel_attention_oracle(t, t.leaf(Matrix(2001, 2)), pv, 1),
                    std::invalid_argument);
  }
  SUBCASE("gradients pass the central-difference check") {
    Rng r(11);
    const int d = 4, heads = 2, n = 5;
    GlobalLayerParams p = random_global(r, d);
    std::vector<NamedMatrix> params = {{"x", r.normal_matrix(n, d)}, {"w_q", p.w_q},
                                       {"w_k", p.w_k},   {"w_v", p.w_v},
                                       {"w_h", p.w_h},   {"beta", p.beta},
                                       {"ln_gain", p.ln_gain}, {"ln_shift", p.ln_shift}};
    double err = grad_check(
        [&](Tape& t, const std::vector<Value>& v) {
          GlobalLayerValues gv{v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
          return t.sum_all(t.sigmoid(global_layer(t, v[0], gv, heads, ones_carrier(t, n))));
        },
        params, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("mixed parallel layer") {
  Rng r(14);
  Graph g = gen_er(6, 0.5, 15);
  GraphContext ctx = make_graph_context(g);
  const int d = 4, heads = 2;
  MixedLayerParams p;
  p.glob = random_global(r, d);
  p.a_src = r.normal_matrix(heads, d / heads, 0.6);
  p.a_dst = r.normal_matrix(heads, d / heads, 0.6);

  SUBCASE("output is the gated sum of both branches") {
    Matrix x = r.normal_matrix(6, d);
    Tape t;
    MixedLayerValues pv = bind(t, p);
    Matrix out = mixed_layer(t, ctx, t.leaf(x), pv, heads, ones_carrier(t, 6)).val();
    CHECK(out.rows() == 6);
    CHECK(out.cols() == d);
    CHECK(out.all_finite());
  }
  SUBCASE("gradients pass the central-difference check") {
    std::vector<NamedMatrix> params = {{"x", r.normal_matrix(6, d)},
                                       {"w_q", p.glob.w_q},
                                       {"w_k", p.glob.w_k},
                                       {"w_v", p.glob.w_v},
                                       {"w_h", p.glob.w_h},
                                       {"beta", p.glob.beta},
                                       {"ln_gain", p.glob.ln_gain},
                                       {"ln_shift", p.glob.ln_shift},
                                       {"a_src", p.a_src},
                                       {"a_dst", p.a_dst}};
    double err = grad_check(
        [&](Tape& t, const std::vector<Value>& v) {
          MixedLayerValues mv{{v[1], v[2], v[3], v[4], v[5], v[6], v[7]}, v[8], v[9]};
          return t.sum_all(t.sigmoid(mixed_layer(t, ctx, v[0], mv, heads, ones_carrier(t, 6))));
        },
        params, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("dense softmax attention oracle") {
  Rng r(12);
  const int n = 10, d = 4;
  Matrix x = r.normal_matrix(n, d);
  Matrix wq = r.normal_matrix(d, d, 0.6), wk = r.normal_matrix(d, d, 0.6),
         wv = r.normal_matrix(d, d, 0.6);
  SUBCASE("softmax rows sum to one") {
    Tape t;
    Value q = t.matmul(t.leaf(x), t.leaf(wq));
    Value k = t.matmul(t.leaf(x), t.leaf(wk));
    Value s = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(double(d)));
    Matrix probs = t.exp(t.log_softmax_rows(s)).val();
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += probs(i, j);
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
  SUBCASE("identical features attend uniformly") {
    Matrix same(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) same(i, j) = 0.3 * j - 0.1;
    Tape t;
    Matrix out = dense_softmax_attention(t, t.leaf(same), t.leaf(wq), t.leaf(wk), t.leaf(wv)).val();
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < d; ++j) CHECK(out(i, j) == doctest::Approx(out(0, j)));
  }
  SUBCASE("size cap enforced") {
    Tape t;
    CHECK_THROWS_AS(
        dense_softmax_attention(t, t.leaf(Matrix(2001, 1)), t.leaf(Matrix(1, 1, {1.0})),
                                t.leaf(Matrix(1, 1, {1.0})), t.leaf(Matrix(1, 1, {1.0}))),
        std::invalid_argument);
  }
}

TEST_CASE("kernel denominators") {
  SUBCASE("all-zero scores give n/2 per column") {
    Matrix k(7, 3);
    Matrix den = sigmoid_kernel_denominator(k);
    for (int j = 0; j < 3; ++j) CHECK(den(0, j) == doctest::Approx(3.5));
  }
  SUBCASE("sigmoid stays below the row count for any input") {
    Rng r(13);
    Matrix k = r.normal_matrix(40, 5, 50.0);
    Matrix den = sigmoid_kernel_denominator(k);
    for (int j = 0; j < 5; ++j) {
      CHECK(den(0, j) > 0.0);
      CHECK(den(0, j) < 40.0);
    }
  }
  SUBCASE("relu accumulation is unbounded in contrast") {
    Matrix k = Matrix::filled(1000, 1, 1e6);
    CHECK(relu_kernel_denominator(k)(0, 0) == doctest::Approx(1e9));
    CHECK(sigmoid_kernel_denominator(k)(0, 0) <= 1000.0);
  }
}
