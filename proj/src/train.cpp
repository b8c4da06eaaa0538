#include "pn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>


namespace pn {

void TrainConfig::validate() const {
  if (warmup_epochs < 0 || main_epochs < 0)
    throw std::invalid_argument("train config: epochs must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
  if (batch_parts < 1) throw std::invalid_argument("train config: batch_parts must be >= 1");
}

AdamState make_adam_state(const PolynormerModel& model) {
  AdamState s;
  model.for_each_param([&](const std::string&, const Matrix& p) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  });
  return s;
}

void adam_step(std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(beta2, double(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& theta = *params[p];
    const Matrix& g = *grads[p];
    if (!theta.same_shape(g))
      throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() +
                                  " != parameter shape " + theta.shape_str());
    Matrix& m = state.m[p];
    Matrix& v = state.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = beta1 * m.data()[i] + (1.0 - beta1) * gi;
      v.data()[i] = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      theta.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

Value nll_loss(Tape& t, Value log_probs, const std::vector<int>& labels,
               const std::vector<int>& mask_indices) {
  if (mask_indices.empty()) throw std::invalid_argument("nll_loss: empty mask");
  const int n = log_probs.rows(), c = log_probs.cols();
  // Selection as a constant matrix: -1/|mask| at each (i, label_i). The loss
  // is then a plain sum of the Hadamard product, so the backward pass needs
  // no dedicated kernel.
  Matrix sel(n, c);
  const double w = -1.0 / double(mask_indices.size());
  for (int i : mask_indices) {
    if (i < 0 || i >= n) throw std::invalid_argument("nll_loss: mask index out of range");
    const int y = labels[std::size_t(i)];
    if (y < 0 || y >= c)
      throw std::invalid_argument("nll_loss: node " + std::to_string(i) + " has no valid label");
    sel(i, y) = w;
  }
  return t.sum_all(t.hadamard(log_probs, t.leaf(std::move(sel))));
}

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<int>& mask_indices) {
  if (mask_indices.empty()) throw std::invalid_argument("accuracy: empty mask");
  int hits = 0;
  for (int i : mask_indices) {
    int arg = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, arg)) arg = j;  // ties resolve to the lowest index
    if (arg == labels[std::size_t(i)]) ++hits;
  }
  return double(hits) / double(mask_indices.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels,
               const std::vector<int>& mask_indices) {
  if (mask_indices.empty()) throw std::invalid_argument("roc_auc: empty mask");
  std::vector<int> order = mask_indices;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[std::size_t(a)] < scores[std::size_t(b)];
  });
  const std::size_t n = order.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n &&
           scores[std::size_t(order[j + 1])] == scores[std::size_t(order[i])])
      ++j;
    const double avg = (double(i) + double(j)) / 2.0 + 1.0;  // average rank, 1-based
    for (std::size_t k = i; k <= j; ++k) rank[k] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const int y = labels[std::size_t(order[k])];
    if (y != 0 && y != 1)
      throw std::invalid_argument("roc_auc: labels must be binary, got " + std::to_string(y));
    if (y == 1) {
      pos_rank_sum += rank[k];
      ++pos;
    }
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("roc_auc: mask must contain both classes");
  const double u = pos_rank_sum - double(pos) * (double(pos) + 1.0) / 2.0;
  return u / (double(pos) * double(neg));
}

namespace {

std::vector<double> class1_scores(const Matrix& logits) {
  if (logits.cols() != 2)
    throw std::invalid_argument("roc_auc: needs binary logits, got " +
                                std::to_string(logits.cols()) + " classes");
  std::vector<double> s(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) s[std::size_t(i)] = logits(i, 1) - logits(i, 0);
  return s;
}

double metric_of(const Matrix& logits, const Dataset& data, const std::vector<int>& mask,
                 Metric metric) {
  if (metric == Metric::accuracy) return accuracy(logits, data.labels, mask);
  return roc_auc(class1_scores(logits), data.labels, mask);
}

struct Subgraph {
  Dataset data;             // induced node set, renumbered
  std::vector<int> nodes;   // subgraph index -> original node
  std::vector<int> train_local;
};

Subgraph induced_subgraph(const Dataset& d, const std::vector<int>& nodes) {
  Subgraph sg;
  sg.nodes = nodes;
  const int n = int(nodes.size());
  std::vector<int> local_of(std::size_t(d.graph.n), -1);
  for (int i = 0; i < n; ++i) local_of[std::size_t(nodes[std::size_t(i)])] = i;
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    const int u = nodes[std::size_t(i)];
    for (int e = d.graph.row_offsets[u]; e < d.graph.row_offsets[u + 1]; ++e) {
      const int v = d.graph.col_indices[e];
      const int lv = local_of[std::size_t(v)];
      if (lv > i) edges.emplace_back(i, lv);  // cross-part edges are dropped
    }
  }
  sg.data.graph = graph_from_edges(n, edges);
  sg.data.num_classes = d.num_classes;
  sg.data.features = Matrix(n, d.features.cols());
  sg.data.labels.resize(std::size_t(n));
  sg.data.splits.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const int u = nodes[std::size_t(i)];
    for (int j = 0; j < d.features.cols(); ++j) sg.data.features(i, j) = d.features(u, j);
    sg.data.labels[std::size_t(i)] = d.labels[std::size_t(u)];
    sg.data.splits[std::size_t(i)] = d.splits[std::size_t(u)];
    if (d.splits[std::size_t(u)] == Split::train) sg.train_local.push_back(i);
  }
  return sg;
}

struct StepResult {
  double loss = 0.0;
  int count = 0;
};

StepResult train_step(PolynormerModel& model, AdamState& adam, const Dataset& data,
                      const GraphContext& ctx, const std::vector<int>& train_mask,
                      const std::vector<int>* carrier_rows, Stage stage, Rng& dropout_rng,
                      const TrainConfig& cfg) {
  Tape tape;
  BoundModel bound = bind_model(tape, model);
  ForwardOptions opt;
  opt.stage = stage;
  opt.training = true;
  opt.dropout_rng = &dropout_rng;
  Value logits = model_forward(tape, model, bound, ctx, data.features, opt, nullptr, carrier_rows);
  Value log_probs = tape.log_softmax_rows(logits);
  Value loss = nll_loss(tape, log_probs, data.labels, train_mask);
  const double loss_value = loss.val()(0, 0);
  tape.backward(loss);

  std::vector<Value> leaves;
  auto collect = [&](const LocalLayerValues& v) {
    leaves.insert(leaves.end(), {v.w_v, v.w_h, v.beta, v.a_src, v.a_dst, v.ln_gain, v.ln_shift});
  };
  auto collect_g = [&](const GlobalLayerValues& v) {
    leaves.insert(leaves.end(),
                  {v.w_q, v.w_k, v.w_v, v.w_h, v.beta, v.ln_gain, v.ln_shift});
  };
  leaves.push_back(bound.input_w);
  for (const auto& v : bound.local) collect(v);
  for (const auto& v : bound.global) collect_g(v);
  for (const auto& v : bound.mixed) {
    collect_g(v.glob);
    leaves.push_back(v.a_src);
    leaves.push_back(v.a_dst);
  }
  leaves.push_back(bound.head_w);

  std::vector<Matrix*> params;
  model.for_each_param([&](const std::string&, Matrix& p) { params.push_back(&p); });
  if (params.size() != leaves.size())
    throw std::logic_error("train_step: leaf/parameter order out of sync");
  std::vector<const Matrix*> grads;
  grads.reserve(leaves.size());
  for (const Value& v : leaves) grads.push_back(&tape.grad(v));
  adam_step(params, grads, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  return StepResult{loss_value, int(train_mask.size())};
}

}  // namespace

Metrics evaluate(const PolynormerModel& model, const Dataset& data, Split split, Metric metric) {
  const std::vector<int> mask = data.split_indices(split);
  if (mask.empty()) throw std::invalid_argument("evaluate: empty mask");
  if (metric == Metric::auc && data.num_classes != 2)
    throw std::invalid_argument("evaluate: auc requires a binary task, got " +
                                std::to_string(data.num_classes) + " classes");
  Tape tape;
  BoundModel bound = bind_model(tape, model);
  GraphContext ctx = make_graph_context(data.graph, model.config.local_kind == LocalKind::gcn);
  ForwardOptions opt;
  opt.stage = Stage::full;
  Value logits = model_forward(tape, model, bound, ctx, data.features, opt);
  Value log_probs = tape.log_softmax_rows(logits);

  Metrics out;
  out.loss = nll_loss(tape, log_probs, data.labels, mask).val()(0, 0);
  const Matrix& l = logits.val();
  if (metric == Metric::accuracy)
    out.accuracy = accuracy(l, data.labels, mask);
  else
    out.auc = roc_auc(class1_scores(l), data.labels, mask);
  return out;
}

TrainResult train(PolynormerModel model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  const std::vector<int> train_mask = data.split_indices(Split::train);
  if (train_mask.empty()) throw std::invalid_argument("train: empty train mask");
  const bool has_valid = !data.split_indices(Split::valid).empty();
  const bool has_test = !data.split_indices(Split::test).empty();

  if (model.config.variant == Variant::v2) attach_gate_carrier(model, data.graph);
  const bool want_gcn = model.config.local_kind == LocalKind::gcn;
  GraphContext full_ctx = make_graph_context(data.graph, want_gcn);

  AdamState adam = make_adam_state(model);
  Rng dropout_rng = Rng(cfg.seed).fork(11);
  Rng part_rng = Rng(cfg.seed).fork(13);

  TrainResult result;
  PolynormerModel best = model;
  double best_val = -1.0;
  const int total_epochs = cfg.warmup_epochs + cfg.main_epochs;

  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const bool warmup_phase = epoch < cfg.warmup_epochs;
    const Stage stage = warmup_phase ? Stage::warmup : Stage::full;

    double loss_sum = 0.0;
    int loss_count = 0;
    if (cfg.batch_parts <= 1) {
      StepResult r = train_step(model, adam, data, full_ctx, train_mask, nullptr, stage,
                                dropout_rng, cfg);
      loss_sum = r.loss * r.count;
      loss_count = r.count;
    } else {
      // Fresh random partition every epoch; each part trains on its
      // node-induced subgraph restricted to train nodes.
      Partitioning parts = random_partition(data.graph.n, cfg.batch_parts, part_rng.next_u64());
      std::vector<std::vector<int>> members(std::size_t(parts.parts));
      for (int i = 0; i < data.graph.n; ++i)
        members[std::size_t(parts.part_of[std::size_t(i)])].push_back(i);
      for (const auto& nodes : members) {
        Subgraph sg = induced_subgraph(data, nodes);
        if (sg.train_local.empty()) continue;
        GraphContext ctx = make_graph_context(sg.data.graph, want_gcn);
        StepResult r = train_step(model, adam, sg.data, ctx, sg.train_local,
                                  model.config.variant == Variant::v2 ? &sg.nodes : nullptr,
                                  stage, dropout_rng, cfg);
        loss_sum += r.loss * r.count;
        loss_count += r.count;
      }
    }
    const double train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    if (!std::isfinite(train_loss)) throw NumericFailure(epoch);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = warmup_phase ? "warmup" : "full";
    rec.train_loss = train_loss;
    // Metrics are computed at the phase's own stage so the warmup log tracks
    // the module actually being trained.
    {
      Tape tape;
      BoundModel bound = bind_model(tape, model);
      ForwardOptions opt;
      opt.stage = stage;
      Value logits = model_forward(tape, model, bound, full_ctx, data.features, opt);
      const Matrix& l = logits.val();
      if (has_valid) rec.val_metric = metric_of(l, data, data.split_indices(Split::valid), cfg.metric);
      if (has_test) rec.test_metric = metric_of(l, data, data.split_indices(Split::test), cfg.metric);
    }
    result.log.push_back(rec);

    // Selection tracks the deployment phase; with main_epochs == 0 the
    // warmup phase is the deployment phase.
    const bool selectable = !warmup_phase || cfg.main_epochs == 0;
    if (selectable && has_valid && rec.val_metric > best_val) {
      best_val = rec.val_metric;
      best = model;
    }
  }

  if (best_val < 0.0) best = model;  // no validation mask or zero epochs
  result.model = std::move(best);
  result.best_val_metric = std::max(best_val, 0.0);
  if (has_test)
    result.final_test_metric =
        evaluate(result.model, data, Split::test, cfg.metric).value(cfg.metric);
  return result;
}

std::string metrics_csv(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,stage,train_loss,val_metric,test_metric\n";
  char buf[160];
  for (const EpochRecord& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.17g,%.17g,%.17g\n", r.epoch, r.stage.c_str(),
                  r.train_loss, r.val_metric, r.test_metric);
    out += buf;
  }
  return out;
}

void write_metrics_csv(const std::vector<EpochRecord>& log, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("metrics: cannot open " + path + " for writing");
  f << metrics_csv(log);
  if (!f) throw std::runtime_error("metrics: write to " + path + " failed");
}

BenchPoint bench_training_run(const Dataset& data, const ModelConfig& cfg, int epochs,
                              double lr, std::uint64_t seed) {
  if (epochs < 1) throw std::invalid_argument("bench: epochs must be >= 1");
  alloc_stats::release_cached();
  PolynormerModel model = init_model(cfg, seed);
  AdamState adam = make_adam_state(model);
  GraphContext ctx = make_graph_context(data.graph, cfg.local_kind == LocalKind::gcn);
  const std::vector<int> mask = data.split_indices(Split::train);
  TrainConfig step_cfg;
  step_cfg.lr = lr;
  Rng dropout_rng(seed);

  alloc_stats::reset_peak();
  // One untimed epoch faults in and frees every page the steady state needs,
  // so the timed epochs measure compute rather than first-touch costs that
  // depend on what ran earlier in the process.
  train_step(model, adam, data, ctx, mask, nullptr, Stage::full, dropout_rng, step_cfg);
  const auto start = std::chrono::steady_clock::now();
  for (int e = 0; e < epochs; ++e) {
    StepResult r =
        train_step(model, adam, data, ctx, mask, nullptr, Stage::full, dropout_rng, step_cfg);
    if (!std::isfinite(r.loss)) throw NumericFailure(e);
  }
  const auto stop = std::chrono::steady_clock::now();

  BenchPoint point;
  point.n = data.graph.n;
  point.m = data.graph.undirected_edge_count();
  point.sec_per_epoch =
      std::chrono::duration_cast<std::chrono::duration<double>>(stop - start).count() / epochs;
  point.peak_bytes = alloc_stats::peak_bytes();
  return point;
}

}  // namespace pn
