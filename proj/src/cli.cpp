#include "pn/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "pn/train.hpp"
#include "pn/verify.hpp"

namespace pn::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- flat key=value run configuration ---

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const char* required[] = {"hidden_dim",    "heads",       "local_layers", "global_layers",
                            "warmup_epochs", "main_epochs", "lr",           "seed"};
  for (const char* key : required)
    if (!kv.count(key)) throw std::runtime_error("config: missing required key " + std::string(key));

  const std::map<std::string, std::string> defaults = {
      {"dropout", "0"},          {"activation", "none"}, {"variant", "v1"},
      {"local_kind", "gat"},     {"scheme", "local_to_global"},
      {"batch_parts", "1"},      {"metric", "accuracy"}};
  for (const auto& [k, v] : defaults)
    if (!kv.count(k)) kv[k] = v;

  const std::set<std::string> known = {
      "hidden_dim", "heads",      "local_layers", "global_layers", "warmup_epochs",
      "main_epochs", "lr",        "seed",         "dropout",       "activation",
      "variant",    "local_kind", "scheme",       "batch_parts",   "metric"};
  for (const auto& [k, v] : kv) {
    (void)v;
    if (!known.count(k)) throw std::runtime_error("config: unknown key " + k);
  }

  RunConfig rc;
  rc.model.hidden_dim = std::stoi(kv["hidden_dim"]);
  rc.model.heads = std::stoi(kv["heads"]);
  rc.model.local_layers = std::stoi(kv["local_layers"]);
  rc.model.global_layers = std::stoi(kv["global_layers"]);
  rc.model.dropout = std::stod(kv["dropout"]);
  if (kv["activation"] == "none")
    rc.model.activation = Activation::none;
  else if (kv["activation"] == "relu")
    rc.model.activation = Activation::relu;
  else
    throw std::runtime_error("config: activation must be none or relu");
  if (kv["variant"] == "v1")
    rc.model.variant = Variant::v1;
  else if (kv["variant"] == "v2")
    rc.model.variant = Variant::v2;
  else
    throw std::runtime_error("config: variant must be v1 or v2");
  if (kv["local_kind"] == "gat")
    rc.model.local_kind = LocalKind::gat;
  else if (kv["local_kind"] == "gcn")
    rc.model.local_kind = LocalKind::gcn;
  else
    throw std::runtime_error("config: local_kind must be gat or gcn");
  if (kv["scheme"] == "local_to_global")
    rc.model.scheme = Scheme::local_to_global;
  else if (kv["scheme"] == "local_and_global")
    rc.model.scheme = Scheme::local_and_global;
  else
    throw std::runtime_error("config: scheme must be local_to_global or local_and_global");
  rc.train.warmup_epochs = std::stoi(kv["warmup_epochs"]);
  rc.train.main_epochs = std::stoi(kv["main_epochs"]);
  rc.train.lr = std::stod(kv["lr"]);
  rc.train.seed = std::stoull(kv["seed"]);
  rc.train.batch_parts = std::stoi(kv["batch_parts"]);
  if (kv["metric"] == "accuracy")
    rc.train.metric = Metric::accuracy;
  else if (kv["metric"] == "auc")
    rc.train.metric = Metric::auc;
  else
    throw std::runtime_error("config: metric must be accuracy or auc");
  return rc;
}

Dataset graph_only_dataset(Graph g) {
  Dataset d;
  const int n = g.n;
  d.graph = std::move(g);
  d.features = Matrix::filled(n, 1, 1.0);
  d.labels.assign(std::size_t(n), -1);
  d.splits.assign(std::size_t(n), Split::none);
  d.num_classes = 2;
  return d;
}

// --- subcommand bodies ---

int cmd_gen(const std::string& kind, int n, double p, int classes, double p_in, double p_out,
            int dim, double noise, int skip, std::uint64_t seed, const std::string& out_path) {
  Dataset ds;
  if (kind == "er") {
    ds = graph_only_dataset(gen_er(n, p, seed));
  } else if (kind == "csl") {
    ds = graph_only_dataset(gen_csl(n, skip));
  } else {
    ds = gen_sbm(n, classes, p_in, p_out, dim, noise, seed);
  }
  std::cout << "n=" << ds.graph.n << " m=" << ds.graph.undirected_edge_count();
  if (kind == "sbm") std::cout << " edge_homophily=" << fmt17(edge_homophily(ds));
  std::cout << "\n";
  if (!out_path.empty()) write_dataset(ds, out_path);
  return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& ckpt_path, const std::string& log_path, bool seed_set,
              std::uint64_t seed_override) {
  const Dataset data = parse_dataset(data_path);
  RunConfig rc = parse_run_config(config_path);
  if (seed_set) rc.train.seed = seed_override;
  rc.model.input_dim = data.features.cols();
  rc.model.classes = data.num_classes;
  rc.model.validate();
  rc.train.validate();

  PolynormerModel model = init_model(rc.model, rc.train.seed);
  TrainResult result = train(std::move(model), data, rc.train);
  if (!log_path.empty()) write_metrics_csv(result.log, log_path);
  if (!ckpt_path.empty()) save_checkpoint(result.model, ckpt_path);
  std::cout << "test_metric=" << fmt17(result.final_test_metric) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& split_name, const std::string& metric_name) {
  const Dataset data = parse_dataset(data_path);
  const PolynormerModel model = load_checkpoint(ckpt_path);
  if (model.config.input_dim != data.features.cols())
    throw std::runtime_error("eval: checkpoint input_dim " +
                             std::to_string(model.config.input_dim) +
                             " != dataset feature dim " + std::to_string(data.features.cols()));
  if (model.config.classes != data.num_classes)
    throw std::runtime_error("eval: checkpoint classes " + std::to_string(model.config.classes) +
                             " != dataset classes " + std::to_string(data.num_classes));
  Split split = Split::test;
  if (split_name == "train")
    split = Split::train;
  else if (split_name == "valid")
    split = Split::valid;
  else if (split_name != "test")
    throw std::runtime_error("eval: split must be train, valid or test");
  const Metric metric = metric_name == "auc" ? Metric::auc : Metric::accuracy;
  if (metric_name != "auc" && metric_name != "accuracy")
    throw std::runtime_error("eval: metric must be accuracy or auc");
  const Metrics m = evaluate(model, data, split, metric);
  std::cout << "metric=" << fmt17(m.value(metric)) << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckResult> results;
  if (suite == "grad")
    results = verify_grad(seed);
  else if (suite == "equivariance")
    results = verify_equivariance(seed);
  else if (suite == "kernel")
    results = verify_kernel(seed);
  else if (suite == "poly")
    results = verify_poly(seed);
  else if (suite == "wl")
    results = verify_wl(seed);
  else if (suite == "all")
    results = verify_all(seed);
  else
    throw std::runtime_error("verify: unknown suite " + suite);
  for (const CheckResult& r : results)
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " [" << r.detail << "]\n";
  return all_passed(results) ? kExitOk : kExitVerifyFailed;
}

int cmd_attention(const std::string& data_path, const std::string& ckpt_path, int k,
                  std::uint64_t seed, const std::string& out_path) {
  const Dataset data = parse_dataset(data_path);
  PolynormerModel model = load_checkpoint(ckpt_path);
  if (model.config.global_layers < 1)
    throw std::runtime_error("attention: model has no global attention layer");
  if (k < 1 || k > data.graph.n)
    throw std::runtime_error("attention: node count must lie in [1, n]");

  // Reconstruct the input of the last global layer.
  Tape tape;
  BoundModel bound = bind_model(tape, model);
  GraphContext ctx = make_graph_context(data.graph, model.config.local_kind == LocalKind::gcn);
  ForwardTrace trace;
  ForwardOptions opt;
  opt.stage = Stage::full;
  model_forward(tape, model, bound, ctx, data.features, opt, &trace);
  const Matrix x = trace.global_inputs.back().val();
  const GlobalLayerParams& layer = model.global.back();
  const Matrix sq = map(matmul(x, layer.w_q), sigmoid_scalar);
  const Matrix sk = map(matmul(x, layer.w_k), sigmoid_scalar);
  const Matrix ksum = sigmoid_kernel_denominator(matmul(x, layer.w_k));

  // Sample k distinct nodes.
  Rng rng(seed);
  std::vector<int> nodes = rng.permutation(data.graph.n);
  nodes.resize(std::size_t(k));

  const int heads = model.config.heads;
  const int dh = model.config.hidden_dim / heads;
  Matrix block(k, k);
  double mx = 0.0;
  for (int a = 0; a < k; ++a) {
    const int i = nodes[std::size_t(a)];
    for (int b = 0; b < k; ++b) {
      const int j = nodes[std::size_t(b)];
      double avg = 0.0;
      for (int h = 0; h < heads; ++h) {
        double num = 0.0, den = 0.0;
        for (int t = h * dh; t < (h + 1) * dh; ++t) {
          num += sq(i, t) * sk(j, t);
          den += sq(i, t) * ksum(0, t);
        }
        avg += num / den;  // exact attention weight A_ij of the dense form
      }
      block(a, b) = avg / heads;
      mx = std::max(mx, block(a, b));
    }
  }
  for (std::size_t i = 0; i < block.size(); ++i) block.data()[i] /= mx;

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("attention: cannot open " + out_path + " for writing");
  for (int a = 0; a < k; ++a) out << (a ? "," : "") << nodes[std::size_t(a)];
  out << "\n";
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) out << (b ? "," : "") << fmt17(block(a, b));
    out << "\n";
  }
  std::cout << "wrote " << k << "x" << k << " attention block to " << out_path << "\n";
  return kExitOk;
}

int cmd_bench(const std::string& n_list, double p_degree, int dim, int epochs,
              const std::string& out_path, std::uint64_t seed) {
  std::vector<int> sizes;
  std::stringstream ss(n_list);
  std::string tok;
  while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
  if (sizes.empty()) throw std::runtime_error("bench: empty n list");
  if (epochs < 1) throw std::runtime_error("bench: epochs must be >= 1");

  std::ostringstream csv;
  csv << "n,m,sec_per_epoch,peak_bytes\n";
  for (int n : sizes) {
    Graph g = gen_er(n, std::min(1.0, p_degree / double(n - 1)), seed);
    Rng r = Rng(seed).fork(std::uint64_t(n));
    Dataset data;
    data.graph = g;
    data.features = r.normal_matrix(n, dim);
    data.num_classes = 2;
    data.labels.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) data.labels[std::size_t(i)] = r.uniform_int(0, 1);
    data.splits.assign(std::size_t(n), Split::train);

    ModelConfig mc;
    mc.input_dim = dim;
    mc.hidden_dim = 64;
    mc.heads = 8;
    mc.local_layers = 2;
    mc.global_layers = 1;
    mc.classes = 2;
    const BenchPoint point = bench_training_run(data, mc, epochs, 1e-3, seed);
    csv << point.n << ',' << point.m << ',' << fmt17(point.sec_per_epoch) << ','
        << point.peak_bytes << "\n";
    std::cout << "n=" << point.n << " m=" << point.m
              << " sec/epoch=" << fmt17(point.sec_per_epoch)
              << " peak_bytes=" << point.peak_bytes << "\n";
  }
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("bench: cannot open " + out_path + " for writing");
    f << csv.str();
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"CPU linear graph transformer with local-to-global attention"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (PGRF)");
  gen->require_subcommand(1);
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  int er_n = 100;
  double er_p = 0.1;
  auto* gen_er_cmd = gen->add_subcommand("er", "Erdos-Renyi graph");
  gen_er_cmd->add_option("--n", er_n, "node count")->required();
  gen_er_cmd->add_option("--p", er_p, "edge probability")->required()->check(CLI::Range(0.0, 1.0));
  gen_er_cmd->add_option("--seed", gen_seed, "random seed");
  gen_er_cmd->add_option("--out", gen_out, "output path");
  int sbm_n = 1000, sbm_classes = 4, sbm_dim = 16;
  double sbm_pin = 0.05, sbm_pout = 0.005, sbm_noise = 0.1;
  auto* gen_sbm_cmd = gen->add_subcommand("sbm", "stochastic block model dataset");
  gen_sbm_cmd->add_option("--n", sbm_n, "node count")->required();
  gen_sbm_cmd->add_option("--classes", sbm_classes, "class count")->required();
  gen_sbm_cmd->add_option("--p-in", sbm_pin, "intra-class edge probability")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  gen_sbm_cmd->add_option("--p-out", sbm_pout, "inter-class edge probability")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  gen_sbm_cmd->add_option("--dim", sbm_dim, "feature dimension")->required();
  gen_sbm_cmd->add_option("--noise", sbm_noise, "feature noise scale")->required();
  gen_sbm_cmd->add_option("--seed", gen_seed, "random seed");
  gen_sbm_cmd->add_option("--out", gen_out, "output path");
  int csl_n = 11, csl_skip = 2;
  auto* gen_csl_cmd = gen->add_subcommand("csl", "circular skip link graph");
  gen_csl_cmd->add_option("--n", csl_n, "node count")->required();
  gen_csl_cmd->add_option("--skip", csl_skip, "skip length")->required();
  gen_csl_cmd->add_option("--out", gen_out, "output path");

  // train
  std::string train_data, train_config, train_ckpt, train_log;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "train on a PGRF dataset");
  train_cmd->add_option("--data", train_data, "dataset path")->required();
  train_cmd->add_option("--config", train_config, "key=value config path")->required();
  train_cmd->add_option("--out-checkpoint", train_ckpt, "checkpoint output path");
  train_cmd->add_option("--log", train_log, "metrics CSV output path");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "override the config seed");

  // eval
  std::string eval_data, eval_ckpt, eval_split = "test", eval_metric = "accuracy";
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--data", eval_data, "dataset path")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--split", eval_split, "train|valid|test");
  eval_cmd->add_option("--metric", eval_metric, "accuracy|auc");
  eval_cmd->add_option("--seed", eval_seed, "accepted for interface uniformity; unused");

  // verify
  std::string verify_suite = "all";
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "run property suites");
  verify_cmd->add_option("--suite", verify_suite, "grad|equivariance|kernel|poly|wl|all");
  verify_cmd->add_option("--seed", verify_seed, "random seed");

  // attention
  std::string attn_data, attn_ckpt, attn_out;
  int attn_nodes = 100;
  std::uint64_t attn_seed = 0;
  auto* attn_cmd = app.add_subcommand("attention", "export last-global-layer attention scores");
  attn_cmd->add_option("--data", attn_data, "dataset path")->required();
  attn_cmd->add_option("--checkpoint", attn_ckpt, "checkpoint path")->required();
  attn_cmd->add_option("--nodes", attn_nodes, "sample size");
  attn_cmd->add_option("--seed", attn_seed, "random seed");
  attn_cmd->add_option("--out", attn_out, "CSV output path")->required();

  // bench
  std::string bench_list = "1000,2000,4000,8000", bench_out;
  double bench_degree = 5.0;
  int bench_dim = 100, bench_epochs = 3;
  std::uint64_t bench_seed = 0;
  auto* bench_cmd = app.add_subcommand("bench", "scaling benchmark on random graphs");
  bench_cmd->add_option("--n-list", bench_list, "comma-separated node counts");
  bench_cmd->add_option("--p-degree", bench_degree, "target average degree");
  bench_cmd->add_option("--dim", bench_dim, "feature dimension");
  bench_cmd->add_option("--epochs", bench_epochs, "epochs per size");
  bench_cmd->add_option("--seed", bench_seed, "random seed");
  bench_cmd->add_option("--out", bench_out, "CSV output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_er_cmd->parsed()) return cmd_gen("er", er_n, er_p, 0, 0, 0, 0, 0, 0, gen_seed, gen_out);
      if (gen_sbm_cmd->parsed())
        return cmd_gen("sbm", sbm_n, 0, sbm_classes, sbm_pin, sbm_pout, sbm_dim, sbm_noise, 0,
                       gen_seed, gen_out);
      return cmd_gen("csl", csl_n, 0, 0, 0, 0, 0, 0, csl_skip, gen_seed, gen_out);
    }
    if (train_cmd->parsed())
      return cmd_train(train_data, train_config, train_ckpt, train_log,
                       train_seed_opt->count() > 0, train_seed);
    if (eval_cmd->parsed()) return cmd_eval(eval_data, eval_ckpt, eval_split, eval_metric);
    if (verify_cmd->parsed()) return cmd_verify(verify_suite, verify_seed);
    if (attn_cmd->parsed())
      return cmd_attention(attn_data, attn_ckpt, attn_nodes, attn_seed, attn_out);
    if (bench_cmd->parsed())
      return cmd_bench(bench_list, bench_degree, bench_dim, bench_epochs, bench_out, bench_seed);
  } catch (const NumericFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace pn::cli
