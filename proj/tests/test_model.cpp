#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pn/model.hpp"
#include "pn/mpoly.hpp"

using namespace pn;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.input_dim = 16;
  cfg.hidden_dim = 64;
  cfg.local_layers = 2;
  cfg.global_layers = 1;
  cfg.heads = 8;
  cfg.classes = 4;
  return cfg;
}

Dataset random_dataset(Rng& r, int n, int d, int classes) {
  Dataset data;
  data.graph = gen_er(n, 0.25, r.next_u64());
  data.features = r.normal_matrix(n, d);
  data.num_classes = classes;
  data.labels.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) data.labels[std::size_t(i)] = r.uniform_int(0, classes - 1);
  data.splits.assign(std::size_t(n), Split::train);
  return data;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/pn_test_") + name + "_" + std::to_string(::getpid());
}

}  // namespace

TEST_CASE("init_model") {
  SUBCASE("same seed gives bitwise equal parameters") {
    PolynormerModel a = init_model(small_config(), 42);
    PolynormerModel b = init_model(small_config(), 42);
    bool equal = true;
    a.for_each_param([&](const std::string& name, const Matrix& pa) {
      b.for_each_param([&](const std::string& nb, const Matrix& pb) {
        if (name != nb) return;
        for (std::size_t i = 0; i < pa.size(); ++i)
          if (pa.data()[i] != pb.data()[i]) equal = false;
      });
    });
    CHECK(equal);
  }
  SUBCASE("beta starts at zero so every gate is one half") {
    PolynormerModel m = init_model(small_config(), 1);
    for (const auto& l : m.local)
      for (std::size_t i = 0; i < l.beta.size(); ++i) {
        CHECK(l.beta.data()[i] == 0.0);
        CHECK(sigmoid_scalar(l.beta.data()[i]) == 0.5);
      }
  }
  SUBCASE("parameter count matches the closed form from shapes") {
    // input 16x64; per local layer 2*64^2 + 5*64; global layer 4*64^2 + 3*64;
    // head 64*4
    PolynormerModel m = init_model(small_config(), 3);
    const std::int64_t d = 64;
    const std::int64_t expected =
        16 * d + 2 * (2 * d * d + 5 * d) + (4 * d * d + 3 * d) + d * 4;
    CHECK(m.parameter_count() == expected);
  }
  SUBCASE("width must divide into heads") {
    ModelConfig bad = small_config();
    bad.hidden_dim = 65;
    CHECK_THROWS_AS(init_model(bad, 0), std::invalid_argument);
  }
}

TEST_CASE("forward") {
  Rng r(31);
  ModelConfig cfg = small_config();
  cfg.input_dim = 6;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  Dataset data = random_dataset(r, 20, cfg.input_dim, cfg.classes);
  PolynormerModel model = init_model(cfg, 7);

  SUBCASE("logit shape is n by classes") {
    Matrix out = forward_logits(model, data, Stage::full);
    CHECK(out.rows() == 20);
    CHECK(out.cols() == cfg.classes);
  }
  SUBCASE("no global layers makes both stages identical") {
    ModelConfig cfg2 = cfg;
    cfg2.global_layers = 0;
    PolynormerModel m2 = init_model(cfg2, 7);
    Matrix a = forward_logits(m2, data, Stage::full);
    Matrix b = forward_logits(m2, data, Stage::warmup);
    CHECK(max_abs_diff(a, b) == 0.0);
  }
  SUBCASE("x_local accumulates the local layer outputs") {
    Tape t;
    BoundModel bound = bind_model(t, model);
    GraphContext ctx = make_graph_context(data.graph);
    ForwardTrace trace;
    ForwardOptions opt;
    model_forward(t, model, bound, ctx, data.features, opt, &trace);
    REQUIRE(trace.local_outputs.size() == 2);
    Matrix sum = add(trace.local_outputs[0].val(), trace.local_outputs[1].val());
    CHECK(max_abs_diff(sum, trace.x_local.val()) == 0.0);
  }
  SUBCASE("feature dimension mismatch rejected") {
    Tape t;
    BoundModel bound = bind_model(t, model);
    GraphContext ctx = make_graph_context(data.graph);
    ForwardOptions opt;
    CHECK_THROWS_AS(model_forward(t, model, bound, ctx, Matrix(20, 3), opt),
                    std::invalid_argument);
  }
  SUBCASE("relu variant produces nonnegative hidden outputs") {
    ModelConfig cfg2 = cfg;
    cfg2.activation = Activation::relu;
    PolynormerModel m2 = init_model(cfg2, 7);
    Tape t;
    BoundModel bound = bind_model(t, m2);
    GraphContext ctx = make_graph_context(data.graph);
    ForwardTrace trace;
    ForwardOptions opt;
    model_forward(t, m2, bound, ctx, data.features, opt, &trace);
    for (const Value& v : trace.local_outputs)
      for (std::size_t i = 0; i < v.val().size(); ++i) CHECK(v.val().data()[i] >= 0.0);
  }
  SUBCASE("local-and-global scheme runs and stays equivariant") {
    ModelConfig cfg2 = cfg;
    cfg2.scheme = Scheme::local_and_global;
    cfg2.global_layers = 0;
    PolynormerModel m2 = init_model(cfg2, 9);
    Matrix out = forward_logits(m2, data, Stage::full);
    CHECK(out.rows() == 20);

    std::vector<int> perm = r.permutation(20);
    Dataset pd = permute_dataset(data, perm);
    Matrix pout = forward_logits(m2, pd, Stage::full);
    Matrix expected(20, cfg.classes);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < cfg.classes; ++j) expected(perm[std::size_t(i)], j) = out(i, j);
    CHECK(max_abs_diff(pout, expected) < 1e-8);
  }
  SUBCASE("local-and-global scheme insists on zero global layers") {
    ModelConfig cfg2 = cfg;
    cfg2.scheme = Scheme::local_and_global;
    cfg2.global_layers = 1;
    CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
  }
}

TEST_CASE("wl probe") {
  Graph c6 = graph_from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}});
  Graph two_c3 = graph_from_edges(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}});
  SUBCASE("v1 cannot separate regular graphs of equal degree") {
    WlProbeResult r = wl_probe(c6, two_c3, 2, 1.0, Variant::v1);
    CHECK_FALSE(r.distinguishable);
    CHECK(r.max_sorted_diff <= 1e-9);
  }
  SUBCASE("v2 separates them") {
    WlProbeResult r = wl_probe(c6, two_c3, 2, 1.0, Variant::v2);
    CHECK(r.distinguishable);
    CHECK(r.max_sorted_diff > 1e-3);
  }
  SUBCASE("v1 sees different degree sequences") {
    Graph path = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
    Graph star = graph_from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
    CHECK(wl_probe(path, star, 2, 1.0, Variant::v1).distinguishable);
  }
}

TEST_CASE("polynomial degree growth of the ungated attention core") {
  // On a single node with scalar width both attention kinds return the value
  // projection itself, so each layer computes (w_v p) * (w_h p + s). The
  // end-to-end degree doubles per layer: 2^(L1+L2).
  for (int total_layers : {1, 2, 3}) {
    MPoly p = MPoly::variable(1, 0);
    const double w_v = 0.7, w_h = -1.3, s = 0.5;
    for (int l = 0; l < total_layers; ++l)
      p = p.scaled(w_v) * (p.scaled(w_h) + MPoly::constant(1, s));
    CHECK(p.total_degree() == (1 << total_layers));
  }
}

TEST_CASE("checkpoint round trip") {
  Rng r(32);
  ModelConfig cfg = small_config();
  cfg.input_dim = 5;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  PolynormerModel model = init_model(cfg, 17);
  const std::string path = temp_path("ckpt");

  SUBCASE("bitwise round trip") {
    save_checkpoint(model, path);
    PolynormerModel back = load_checkpoint(path);
    bool equal = true;
    int count_a = 0, count_b = 0;
    model.for_each_param([&](const std::string&, const Matrix&) { ++count_a; });
    back.for_each_param([&](const std::string&, const Matrix&) { ++count_b; });
    CHECK(count_a == count_b);
    std::vector<const Matrix*> mats_a, mats_b;
    model.for_each_param([&](const std::string&, const Matrix& m) { mats_a.push_back(&m); });
    back.for_each_param([&](const std::string&, const Matrix& m) { mats_b.push_back(&m); });
    for (std::size_t i = 0; i < mats_a.size(); ++i)
      for (std::size_t j = 0; j < mats_a[i]->size(); ++j)
        if (mats_a[i]->data()[j] != mats_b[i]->data()[j]) equal = false;
    CHECK(equal);
    std::remove(path.c_str());
  }
  SUBCASE("v2 carrier survives the round trip") {
    ModelConfig cfg2 = cfg;
    cfg2.variant = Variant::v2;
    PolynormerModel m2 = init_model(cfg2, 3);
    Graph g = gen_er(12, 0.4, 5);
    attach_gate_carrier(m2, g);
    save_checkpoint(m2, path);
    PolynormerModel back = load_checkpoint(path);
    REQUIRE(back.gate_carrier.has_value());
    CHECK(max_abs_diff(*back.gate_carrier, *m2.gate_carrier) == 0.0);
    std::remove(path.c_str());
  }
  SUBCASE("truncation names the incomplete tensor") {
    save_checkpoint(model, path);
    // chop the file short
    FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f);
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fclose(f);
    std::string content(std::size_t(size), '\0');
    f = std::fopen(path.c_str(), "rb");
    REQUIRE(std::fread(content.data(), 1, std::size_t(size), f) == std::size_t(size));
    std::fclose(f);
    content.resize(std::size_t(size) - 40);
    f = std::fopen(path.c_str(), "wb");
    std::fwrite(content.data(), 1, content.size(), f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("head.w"),
                         std::runtime_error);
    std::remove(path.c_str());
  }
  SUBCASE("unknown extra tensor rejected") {
    // append a spurious tensor and patch the count
    save_checkpoint(model, path);
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    // tensor count sits after magic(4) + version(4) + config length prefix
    std::fseek(f, 8, SEEK_SET);
    std::uint32_t cfg_len = 0;
    REQUIRE(std::fread(&cfg_len, 4, 1, f) == 1);
    const long count_pos = 12 + long(cfg_len);
    std::fseek(f, count_pos, SEEK_SET);
    std::uint32_t count = 0;
    REQUIRE(std::fread(&count, 4, 1, f) == 1);
    ++count;
    std::fseek(f, count_pos, SEEK_SET);
    std::fwrite(&count, 4, 1, f);
    std::fseek(f, 0, SEEK_END);
    const std::uint16_t name_len = 5;
    std::fwrite(&name_len, 2, 1, f);
    std::fwrite("bogus", 1, 5, f);
    const std::uint8_t rank = 2;
    std::fwrite(&rank, 1, 1, f);
    const std::uint64_t dims[2] = {1, 1};
    std::fwrite(dims, 8, 2, f);
    const double payload = 0.0;
    std::fwrite(&payload, 8, 1, f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bogus"),
                         std::runtime_error);
    std::remove(path.c_str());
  }
  SUBCASE("bad magic rejected") {
    FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite("NOPE", 1, 4, f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);
    std::remove(path.c_str());
  }
}

TEST_CASE("gcn local kind stays equivariant") {
  Rng r(33);
  ModelConfig cfg = small_config();
  cfg.input_dim = 4;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  cfg.local_kind = LocalKind::gcn;
  Dataset data = random_dataset(r, 15, cfg.input_dim, cfg.classes);
  PolynormerModel model = init_model(cfg, 4);
  Matrix out = forward_logits(model, data, Stage::full);
  std::vector<int> perm = r.permutation(15);
  Matrix pout = forward_logits(model, permute_dataset(data, perm), Stage::full);
  Matrix expected(15, cfg.classes);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < cfg.classes; ++j) expected(perm[std::size_t(i)], j) = out(i, j);
  CHECK(max_abs_diff(pout, expected) < 1e-8);
}
