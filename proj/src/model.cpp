#include "pn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pn {

void ModelConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("config: input_dim must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("config: hidden_dim must be >= 1");
  if (heads < 1 || hidden_dim % heads != 0)
    throw std::invalid_argument("config: hidden_dim " + std::to_string(hidden_dim) +
                                " not divisible by heads " + std::to_string(heads));
  if (local_layers < 1) throw std::invalid_argument("config: local_layers must be >= 1");
  if (global_layers < 0) throw std::invalid_argument("config: global_layers must be >= 0");
  if (classes < 2) throw std::invalid_argument("config: classes must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("config: dropout must lie in [0,1)");
  if (scheme == Scheme::local_and_global && global_layers != 0)
    throw std::invalid_argument(
        "config: the local_and_global scheme runs local_layers parallel layers; "
        "set global_layers to 0");
}

namespace {

Matrix glorot(Rng& rng, int rows, int cols) {
  const double limit = std::sqrt(6.0 / double(rows + cols));
  return rng.uniform_matrix(rows, cols, -limit, limit);
}

LocalLayerParams init_local(Rng& rng, int d, int heads) {
  const int dh = d / heads;
  LocalLayerParams p;
  p.w_v = glorot(rng, d, d);
  p.w_h = glorot(rng, d, d);
  p.beta = Matrix(1, d);
  p.a_src = glorot(rng, heads, dh);
  p.a_dst = glorot(rng, heads, dh);
  p.ln_gain = Matrix::filled(1, d, 1.0);
  p.ln_shift = Matrix(1, d);
  return p;
}

GlobalLayerParams init_global(Rng& rng, int d) {
  GlobalLayerParams p;
  p.w_q = glorot(rng, d, d);
  p.w_k = glorot(rng, d, d);
  p.w_v = glorot(rng, d, d);
  p.w_h = glorot(rng, d, d);
  p.beta = Matrix(1, d);
  p.ln_gain = Matrix::filled(1, d, 1.0);
  p.ln_shift = Matrix(1, d);
  return p;
}

}  // namespace

PolynormerModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PolynormerModel m;
  m.config = cfg;
  Rng rng(seed);
  m.input_w = glorot(rng, cfg.input_dim, cfg.hidden_dim);
  if (cfg.scheme == Scheme::local_to_global) {
    for (int l = 0; l < cfg.local_layers; ++l)
      m.local.push_back(init_local(rng, cfg.hidden_dim, cfg.heads));
    for (int l = 0; l < cfg.global_layers; ++l) m.global.push_back(init_global(rng, cfg.hidden_dim));
  } else {
    for (int l = 0; l < cfg.local_layers; ++l) {
      MixedLayerParams p;
      p.glob = init_global(rng, cfg.hidden_dim);
      p.a_src = glorot(rng, cfg.heads, cfg.hidden_dim / cfg.heads);
      p.a_dst = glorot(rng, cfg.heads, cfg.hidden_dim / cfg.heads);
      m.mixed.push_back(std::move(p));
    }
  }
  m.head_w = glorot(rng, cfg.hidden_dim, cfg.classes);
  return m;
}

void PolynormerModel::for_each_param(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("input.w", input_w);
  for (std::size_t l = 0; l < local.size(); ++l) {
    const std::string pre = "local." + std::to_string(l) + ".";
    fn(pre + "w_v", local[l].w_v);
    fn(pre + "w_h", local[l].w_h);
    fn(pre + "beta", local[l].beta);
    fn(pre + "a_src", local[l].a_src);
    fn(pre + "a_dst", local[l].a_dst);
    fn(pre + "ln_gain", local[l].ln_gain);
    fn(pre + "ln_shift", local[l].ln_shift);
  }
  for (std::size_t l = 0; l < global.size(); ++l) {
    const std::string pre = "global." + std::to_string(l) + ".";
    fn(pre + "w_q", global[l].w_q);
    fn(pre + "w_k", global[l].w_k);
    fn(pre + "w_v", global[l].w_v);
    fn(pre + "w_h", global[l].w_h);
    fn(pre + "beta", global[l].beta);
    fn(pre + "ln_gain", global[l].ln_gain);
    fn(pre + "ln_shift", global[l].ln_shift);
  }
  for (std::size_t l = 0; l < mixed.size(); ++l) {
    const std::string pre = "mixed." + std::to_string(l) + ".";
    fn(pre + "w_q", mixed[l].glob.w_q);
    fn(pre + "w_k", mixed[l].glob.w_k);
    fn(pre + "w_v", mixed[l].glob.w_v);
    fn(pre + "w_h", mixed[l].glob.w_h);
    fn(pre + "beta", mixed[l].glob.beta);
    fn(pre + "ln_gain", mixed[l].glob.ln_gain);
    fn(pre + "ln_shift", mixed[l].glob.ln_shift);
    fn(pre + "a_src", mixed[l].a_src);
    fn(pre + "a_dst", mixed[l].a_dst);
  }
  fn("head.w", head_w);
}

void PolynormerModel::for_each_param(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  auto& self = const_cast<PolynormerModel&>(*this);
  self.for_each_param([&](const std::string& name, Matrix& m) { fn(name, m); });
}

std::int64_t PolynormerModel::parameter_count() const {
  std::int64_t total = 0;
  for_each_param([&](const std::string&, const Matrix& m) { total += std::int64_t(m.size()); });
  return total;
}

void attach_gate_carrier(PolynormerModel& model, const Graph& g) {
  if (model.config.variant != Variant::v2) return;
  if (model.gate_carrier && model.gate_carrier->rows() == g.n) return;
  model.gate_carrier = fiedler_vector(g).vector;
}

BoundModel bind_model(Tape& t, const PolynormerModel& m) {
  BoundModel b;
  b.input_w = t.leaf(m.input_w);
  for (const auto& p : m.local) b.local.push_back(bind(t, p));
  for (const auto& p : m.global) b.global.push_back(bind(t, p));
  for (const auto& p : m.mixed) b.mixed.push_back(bind(t, p));
  b.head_w = t.leaf(m.head_w);
  return b;
}

namespace {

Value dropout_input(Tape& t, Value x, const ForwardOptions& opt, double rate) {
  if (!opt.training || rate <= 0.0) return x;
  if (!opt.dropout_rng)
    throw std::invalid_argument("forward: training with dropout requires an rng");
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.data()[i] = opt.dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
  return t.hadamard(x, t.leaf(std::move(mask)));
}

}  // namespace

Value model_forward(Tape& t, const PolynormerModel& m, const BoundModel& bound,
                    const GraphContext& ctx, const Matrix& features, const ForwardOptions& opt,
                    ForwardTrace* trace, const std::vector<int>* carrier_rows) {
  const ModelConfig& cfg = m.config;
  const int n = ctx.g.n;
  if (features.rows() != n)
    throw std::invalid_argument("forward: features rows " + std::to_string(features.rows()) +
                                " != graph nodes " + std::to_string(n));
  if (features.cols() != cfg.input_dim)
    throw std::invalid_argument("forward: feature dim " + std::to_string(features.cols()) +
                                " != input_dim " + std::to_string(cfg.input_dim));

  // Gate carrier: all ones (v1) or the cached Fiedler vector (v2).
  Matrix carrier_m = Matrix::filled(n, 1, 1.0);
  if (cfg.variant == Variant::v2) {
    if (!m.gate_carrier) throw std::invalid_argument("forward: v2 model has no cached carrier");
    if (carrier_rows) {
      if (int(carrier_rows->size()) != n)
        throw std::invalid_argument("forward: carrier restriction size mismatch");
      for (int i = 0; i < n; ++i) carrier_m(i, 0) = (*m.gate_carrier)((*carrier_rows)[i], 0);
    } else {
      if (m.gate_carrier->rows() != n)
        throw std::invalid_argument("forward: cached carrier length mismatch");
      carrier_m = *m.gate_carrier;
    }
  }
  Value carrier = t.leaf(std::move(carrier_m));

  Value x = t.matmul(t.leaf(features), bound.input_w);

  auto maybe_relu = [&](Value v) {
    return cfg.activation == Activation::relu ? t.relu(v) : v;
  };

  if (cfg.scheme == Scheme::local_and_global) {
    for (const auto& layer : bound.mixed) {
      Value in = dropout_input(t, x, opt, cfg.dropout);
      x = maybe_relu(mixed_layer(t, ctx, in, layer, cfg.heads, carrier));
    }
    Value in = dropout_input(t, x, opt, cfg.dropout);
    return t.matmul(in, bound.head_w);
  }

  // Local module: outputs of all L1 layers are accumulated.
  Value x_local;
  for (std::size_t l = 0; l < bound.local.size(); ++l) {
    Value in = dropout_input(t, x, opt, cfg.dropout);
    x = maybe_relu(local_layer(t, ctx, in, bound.local[l], cfg.heads, carrier, cfg.local_kind));
    x_local = l == 0 ? x : t.add(x_local, x);
    if (trace) trace->local_outputs.push_back(x);
  }
  if (trace) trace->x_local = x_local;

  Value rep = x_local;
  if (opt.stage == Stage::full) {
    for (const auto& layer : bound.global) {
      if (trace) trace->global_inputs.push_back(rep);
      Value in = dropout_input(t, rep, opt, cfg.dropout);
      rep = maybe_relu(global_layer(t, in, layer, cfg.heads, carrier));
    }
  }
  Value in = dropout_input(t, rep, opt, cfg.dropout);
  return t.matmul(in, bound.head_w);
}

Matrix forward_logits(const PolynormerModel& m, const Dataset& data, Stage stage) {
  Tape t;
  BoundModel bound = bind_model(t, m);
  GraphContext ctx = make_graph_context(data.graph, m.config.local_kind == LocalKind::gcn);
  ForwardOptions opt;
  opt.stage = stage;
  opt.training = false;
  Value logits = model_forward(t, m, bound, ctx, data.features, opt);
  return logits.val();
}

WlProbeResult wl_probe(const Graph& a, const Graph& b, int rounds, double beta, Variant variant) {
  if (a.n != b.n) throw std::invalid_argument("wl_probe: graphs must have equal node counts");
  auto run = [&](const Graph& g) {
    const int n = g.n;
    Matrix bias(n, 1);
    if (variant == Variant::v2) {
      Matrix v2 = fiedler_vector(g).vector;
      for (int i = 0; i < n; ++i) bias(i, 0) = beta * v2(i, 0);
    } else {
      for (int i = 0; i < n; ++i) bias(i, 0) = beta;
    }
    Matrix x = Matrix::filled(n, 1, 1.0);
    for (int r = 0; r < rounds; ++r) {
      // random-walk aggregation: (A D^-1 x)_i = sum_j x_j / deg_j over neighbors
      Matrix agg(n, 1);
      for (int i = 0; i < n; ++i)
        for (int e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
          const int j = g.col_indices[e];
          agg(i, 0) += x(j, 0) / double(std::max(g.degree(j), 1));
        }
      for (int i = 0; i < n; ++i) x(i, 0) = agg(i, 0) * (x(i, 0) + bias(i, 0));
    }
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) vals[std::size_t(i)] = x(i, 0);
    std::sort(vals.begin(), vals.end());
    Matrix out(n, 1);
    for (int i = 0; i < n; ++i) out(i, 0) = vals[std::size_t(i)];
    return out;
  };
  WlProbeResult res;
  res.outputs_a = run(a);
  res.outputs_b = run(b);
  res.max_sorted_diff = max_abs_diff(res.outputs_a, res.outputs_b);
  res.distinguishable = res.max_sorted_diff > 1e-9;
  return res;
}

}  // namespace pn
