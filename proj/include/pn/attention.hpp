#pragma once

#include "pn/graph.hpp"
#include "pn/tape.hpp"

namespace pn {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kLayerNormEps = 1e-5;

enum class LocalKind { gat, gcn };

/// Trainable state of one local attention layer. Width d, H heads of width
/// d/H; per-head value projections live as column blocks of w_v.
struct LocalLayerParams {
  Matrix w_v;       // d x d
  Matrix w_h;       // d x d
  Matrix beta;      // 1 x d
  Matrix a_src;     // H x d/H, one attention vector per head
  Matrix a_dst;     // H x d/H
  Matrix ln_gain;   // 1 x d
  Matrix ln_shift;  // 1 x d
};

struct GlobalLayerParams {
  Matrix w_q, w_k, w_v, w_h;  // d x d, viewed as H column blocks of d/H
  Matrix beta;                // 1 x d
  Matrix ln_gain, ln_shift;   // 1 x d
};

/// Parallel local-and-global variant layer: global projections plus the
/// sparse attention vectors; both branches share w_v.
struct MixedLayerParams {
  GlobalLayerParams glob;
  Matrix a_src, a_dst;  // H x d/H
};

// Tape handles mirroring the parameter structs.
struct LocalLayerValues {
  Value w_v, w_h, beta, a_src, a_dst, ln_gain, ln_shift;
};
struct GlobalLayerValues {
  Value w_q, w_k, w_v, w_h, beta, ln_gain, ln_shift;
};
struct MixedLayerValues {
  GlobalLayerValues glob;
  Value a_src, a_dst;
};

LocalLayerValues bind(Tape& t, const LocalLayerParams& p);
GlobalLayerValues bind(Tape& t, const GlobalLayerParams& p);
MixedLayerValues bind(Tape& t, const MixedLayerParams& p);

/// Per-graph constants shared by every layer invocation: the self-looped
/// adjacency pattern grouped by destination, edge-to-node incidence used to
/// gather node scores onto edges, and (optionally) the symmetric-normalized
/// adjacency for the GCN local variant.
struct GraphContext {
  Graph g;                 // with self loops
  CsrMatrix attn_pattern;  // n x n adjacency pattern; values unused
  CsrMatrix inc_dst;       // nnz x n, edge -> destination
  CsrMatrix inc_src;       // nnz x n, edge -> source
  CsrMatrix gcn_norm;      // D^{-1/2}(A+I)D^{-1/2}; empty unless requested
};

GraphContext make_graph_context(const Graph& g, bool build_gcn = false);

/// Sparse attention matrix with differentiable edge values; rows sum to one
/// per destination by construction.
struct SparseAttention {
  const CsrMatrix* pattern = nullptr;  // points into the GraphContext
  Value edge_values;                   // nnz x 1
};

/// GAT scores on every directed edge (including self loops):
/// e_ij = leaky_relu(a_src . (W_V x)_i + a_dst . (W_V x)_j) with the softmax
/// taken per destination i.
SparseAttention gat_attention(Tape& t, const GraphContext& ctx, Value x,
                              const LocalLayerValues& p, int head, int heads);

/// Gated combination used by every layer:
/// out = (1 - g) * LayerNorm(H * attn) + g * attn, g = sigmoid(carrier beta^T).
Value gated_combine(Tape& t, Value x, Value attn_out, Value w_h, Value beta, Value ln_gain,
                    Value ln_shift, Value carrier);

Value local_layer(Tape& t, const GraphContext& ctx, Value x, const LocalLayerValues& p,
                  int heads, Value carrier, LocalKind kind = LocalKind::gat);

Value global_layer(Tape& t, Value x, const GlobalLayerValues& p, int heads, Value carrier);

Value mixed_layer(Tape& t, const GraphContext& ctx, Value x, const MixedLayerValues& p,
                  int heads, Value carrier);

/// Kernelized attention output (all heads concatenated) before any gating or
/// normalization; this is the factorized side of the kernel identity.
Value global_attention_output(Tape& t, Value x, const GlobalLayerValues& p, int heads);

/// Explicitly materializes sigma(Q) sigma(K)^T, row-normalizes and applies V.
/// Caps n at 2000.
Value dense_kernel_attention_oracle(Tape& t, Value x, const GlobalLayerValues& p, int heads);

/// Reference softmax attention: softmax(Q K^T / sqrt(d)) V. Caps n at 2000.
Value dense_softmax_attention(Tape& t, Value x, Value wq, Value wk, Value wv);

/// Columnwise sum of sigma(K) over rows; every entry lies strictly in (0, n).
Matrix sigmoid_kernel_denominator(const Matrix& k);
/// The unbounded counterpart used by the stability probe.
Matrix relu_kernel_denominator(const Matrix& k);

}  // namespace pn
