#include "pn/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pn {

LocalLayerValues bind(Tape& t, const LocalLayerParams& p) {
  return {t.leaf(p.w_v),   t.leaf(p.w_h),    t.leaf(p.beta), t.leaf(p.a_src),
          t.leaf(p.a_dst), t.leaf(p.ln_gain), t.leaf(p.ln_shift)};
}

GlobalLayerValues bind(Tape& t, const GlobalLayerParams& p) {
  return {t.leaf(p.w_q),  t.leaf(p.w_k),    t.leaf(p.w_v),    t.leaf(p.w_h),
          t.leaf(p.beta), t.leaf(p.ln_gain), t.leaf(p.ln_shift)};
}

MixedLayerValues bind(Tape& t, const MixedLayerParams& p) {
  return {bind(t, p.glob), t.leaf(p.a_src), t.leaf(p.a_dst)};
}

GraphContext make_graph_context(const Graph& g, bool build_gcn) {
  GraphContext ctx;
  ctx.g = g.self_loops ? g : with_self_loops(g);
  const Graph& gl = ctx.g;
  const int n = gl.n;
  const int nnz = gl.directed_edge_count();

  ctx.attn_pattern.rows = n;
  ctx.attn_pattern.cols = n;
  ctx.attn_pattern.row_offsets = gl.row_offsets;
  ctx.attn_pattern.col_indices = gl.col_indices;
  ctx.attn_pattern.values.assign(std::size_t(nnz), 0.0);

  auto incidence = [&](bool destination) {
    CsrMatrix m;
    m.rows = nnz;
    m.cols = n;
    m.row_offsets.resize(std::size_t(nnz) + 1);
    m.col_indices.resize(std::size_t(nnz));
    m.values.assign(std::size_t(nnz), 1.0);
    int e = 0;
    for (int i = 0; i < n; ++i)
      for (int k = gl.row_offsets[i]; k < gl.row_offsets[i + 1]; ++k, ++e) {
        m.row_offsets[std::size_t(e)] = e;
        m.col_indices[std::size_t(e)] = destination ? i : gl.col_indices[k];
      }
    m.row_offsets[std::size_t(nnz)] = nnz;
    return m;
  };
  ctx.inc_dst = incidence(true);
  ctx.inc_src = incidence(false);

  if (build_gcn) {
    ctx.gcn_norm = ctx.attn_pattern;
    std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) inv_sqrt[std::size_t(i)] = 1.0 / std::sqrt(double(gl.degree(i)));
    int e = 0;
    for (int i = 0; i < n; ++i)
      for (int k = gl.row_offsets[i]; k < gl.row_offsets[i + 1]; ++k, ++e)
        ctx.gcn_norm.values[std::size_t(e)] =
            inv_sqrt[std::size_t(i)] * inv_sqrt[std::size_t(gl.col_indices[k])];
  }
  return ctx;
}

namespace {

void check_head(int head, int heads, int d) {
  if (heads < 1 || d % heads != 0)
    throw std::invalid_argument("attention: width " + std::to_string(d) +
                                " not divisible into " + std::to_string(heads) + " heads");
  if (head < 0 || head >= heads)
    throw std::invalid_argument("attention: head index " + std::to_string(head) +
                                " out of range");
}

/// Column h of an H x dh parameter as a dh x 1 vector.
Value head_vector(Tape& t, Value stacked, int head) {
  Value tr = t.transpose(stacked);  // dh x H
  return t.slice_cols(tr, head, head + 1);
}

SparseAttention gat_from_projected(Tape& t, const GraphContext& ctx, Value z_head,
                                   Value a_src_col, Value a_dst_col) {
  Value u = t.matmul(z_head, a_src_col);  // n x 1, destination contribution
  Value w = t.matmul(z_head, a_dst_col);  // n x 1, source contribution
  Value edge_scores = t.add(t.spmm(ctx.inc_dst, u), t.spmm(ctx.inc_src, w));
  Value act = t.leaky_relu(edge_scores, kLeakySlope);
  Value att = t.segment_softmax(act, ctx.attn_pattern.row_offsets);
  return SparseAttention{&ctx.attn_pattern, att};
}

/// Attention output of the sparse branch for all heads, concatenated.
Value local_attention_output(Tape& t, const GraphContext& ctx, Value z_full, Value a_src,
                             Value a_dst, int heads) {
  const int d = z_full.cols();
  const int dh = d / heads;
  Value out;
  for (int h = 0; h < heads; ++h) {
    Value z_h = heads == 1 ? z_full : t.slice_cols(z_full, h * dh, (h + 1) * dh);
    SparseAttention att =
        gat_from_projected(t, ctx, z_h, head_vector(t, a_src, h), head_vector(t, a_dst, h));
    Value av = t.spmm(*att.pattern, att.edge_values, z_h);
    out = h == 0 ? av : t.concat_cols(out, av);
  }
  return out;
}

Value kernel_attention_head(Tape& t, Value sq, Value sk, Value v_full, int head, int dh) {
  const int lo = head * dh, hi = (head + 1) * dh;
  Value q = sq.cols() == dh ? sq : t.slice_cols(sq, lo, hi);
  Value k = sk.cols() == dh ? sk : t.slice_cols(sk, lo, hi);
  Value v = v_full.cols() == dh ? v_full : t.slice_cols(v_full, lo, hi);
  Value kv = t.matmul(t.transpose(k), v);              // dh x dh
  Value num = t.matmul(q, kv);                         // n x dh
  Value ksum = t.col_sum(k);                           // 1 x dh
  Value den = t.matmul(q, t.transpose(ksum));          // n x 1, strictly positive
  return t.divide(num, t.broadcast_cols(den, dh));
}

Value kernel_attention_all_heads(Tape& t, Value sq, Value sk, Value v_full, int heads) {
  const int dh = v_full.cols() / heads;
  Value out;
  for (int h = 0; h < heads; ++h) {
    Value o = kernel_attention_head(t, sq, sk, v_full, h, dh);
    out = h == 0 ? o : t.concat_cols(out, o);
  }
  return out;
}

}  // namespace

SparseAttention gat_attention(Tape& t, const GraphContext& ctx, Value x,
                              const LocalLayerValues& p, int head, int heads) {
  check_head(head, heads, x.cols());
  const int dh = x.cols() / heads;
  Value z = t.matmul(x, p.w_v);
  Value z_h = heads == 1 ? z : t.slice_cols(z, head * dh, (head + 1) * dh);
  return gat_from_projected(t, ctx, z_h, head_vector(t, p.a_src, head),
                            head_vector(t, p.a_dst, head));
}

Value gated_combine(Tape& t, Value x, Value attn_out, Value w_h, Value beta, Value ln_gain,
                    Value ln_shift, Value carrier) {
  Value h = t.matmul(x, w_h);
  Value prod = t.hadamard(h, attn_out);
  Value normed = t.layer_norm_rows(prod, ln_gain, ln_shift, kLayerNormEps);
  Value gate = t.sigmoid(t.matmul(carrier, beta));  // n x d
  Value ones = t.leaf(Matrix::filled(gate.rows(), gate.cols(), 1.0));
  return t.add(t.hadamard(t.sub(ones, gate), normed), t.hadamard(gate, attn_out));
}

Value local_layer(Tape& t, const GraphContext& ctx, Value x, const LocalLayerValues& p,
                  int heads, Value carrier, LocalKind kind) {
  check_head(0, heads, x.cols());
  Value z = t.matmul(x, p.w_v);
  Value av = kind == LocalKind::gcn
                 ? t.spmm(ctx.gcn_norm, z)
                 : local_attention_output(t, ctx, z, p.a_src, p.a_dst, heads);
  return gated_combine(t, x, av, p.w_h, p.beta, p.ln_gain, p.ln_shift, carrier);
}

Value global_attention_output(Tape& t, Value x, const GlobalLayerValues& p, int heads) {
  check_head(0, heads, x.cols());
  Value sq = t.sigmoid(t.matmul(x, p.w_q));
  Value sk = t.sigmoid(t.matmul(x, p.w_k));
  Value v = t.matmul(x, p.w_v);
  return kernel_attention_all_heads(t, sq, sk, v, heads);
}

Value global_layer(Tape& t, Value x, const GlobalLayerValues& p, int heads, Value carrier) {
  Value av = global_attention_output(t, x, p, heads);
  return gated_combine(t, x, av, p.w_h, p.beta, p.ln_gain, p.ln_shift, carrier);
}

Value mixed_layer(Tape& t, const GraphContext& ctx, Value x, const MixedLayerValues& p,
                  int heads, Value carrier) {
  check_head(0, heads, x.cols());
  Value z = t.matmul(x, p.glob.w_v);
  Value local_av = local_attention_output(t, ctx, z, p.a_src, p.a_dst, heads);
  Value sq = t.sigmoid(t.matmul(x, p.glob.w_q));
  Value sk = t.sigmoid(t.matmul(x, p.glob.w_k));
  Value global_av = kernel_attention_all_heads(t, sq, sk, z, heads);
  Value av = t.add(local_av, global_av);
  return gated_combine(t, x, av, p.glob.w_h, p.glob.beta, p.glob.ln_gain, p.glob.ln_shift,
                       carrier);
}

Value dense_kernel_attention_oracle(Tape& t, Value x, const GlobalLayerValues& p, int heads) {
  const int n = x.rows();
  if (n > 2000)
    throw std::invalid_argument("dense_kernel_attention_oracle: n=" + std::to_string(n) +
                                " exceeds the 2000 cap");
  check_head(0, heads, x.cols());
  const int dh = x.cols() / heads;
  Value sq = t.sigmoid(t.matmul(x, p.w_q));
  Value sk = t.sigmoid(t.matmul(x, p.w_k));
  Value v = t.matmul(x, p.w_v);
  Value out;
  for (int h = 0; h < heads; ++h) {
    Value q = heads == 1 ? sq : t.slice_cols(sq, h * dh, (h + 1) * dh);
    Value k = heads == 1 ? sk : t.slice_cols(sk, h * dh, (h + 1) * dh);
    Value vh = heads == 1 ? v : t.slice_cols(v, h * dh, (h + 1) * dh);
    Value attn = t.matmul(q, t.transpose(k));  // n x n, strictly positive
    Value rows = t.row_sum(attn);
    Value normed = t.divide(attn, t.broadcast_cols(rows, n));
    Value o = t.matmul(normed, vh);
    out = h == 0 ? o : t.concat_cols(out, o);
  }
  return out;
}

Value dense_softmax_attention(Tape& t, Value x, Value wq, Value wk, Value wv) {
  const int n = x.rows();
  if (n > 2000)
    throw std::invalid_argument("dense_softmax_attention: n=" + std::to_string(n) +
                                " exceeds the 2000 cap");
  const int d = wq.cols();
  Value q = t.matmul(x, wq);
  Value k = t.matmul(x, wk);
  Value v = t.matmul(x, wv);
  Value scores = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(double(d)));
  Value probs = t.exp(t.log_softmax_rows(scores));
  return t.matmul(probs, v);
}

Matrix sigmoid_kernel_denominator(const Matrix& k) {
  Matrix out(1, k.cols());
  for (int i = 0; i < k.rows(); ++i)
    for (int j = 0; j < k.cols(); ++j) out(0, j) += sigmoid_scalar(k(i, j));
  return out;
}

Matrix relu_kernel_denominator(const Matrix& k) {
  Matrix out(1, k.cols());
  for (int i = 0; i < k.rows(); ++i)
    for (int j = 0; j < k.cols(); ++j) out(0, j) += std::max(0.0, k(i, j));
  return out;
}

}  // namespace pn
