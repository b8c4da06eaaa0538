#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pn/gradcheck.hpp"
#include "pn/train.hpp"

using namespace pn;

TEST_CASE("nll loss") {
  SUBCASE("uniform predictions cost ln c") {
    Tape t;
    const int n = 3, c = 4;
    Value lp = t.log_softmax_rows(t.leaf(Matrix(n, c)));
    std::vector<int> labels = {1, 2, 0};
    std::vector<int> mask = {0, 1, 2};
    CHECK(nll_loss(t, lp, labels, mask).val()(0, 0) == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("confident correct predictions cost almost nothing") {
    Tape t;
    Matrix logits(2, 2);
    logits(0, 0) = 30.0;
    logits(1, 1) = 30.0;
    Value lp = t.log_softmax_rows(t.leaf(logits));
    std::vector<int> labels = {0, 1};
    std::vector<int> mask = {0, 1};
    CHECK(nll_loss(t, lp, labels, mask).val()(0, 0) < 1e-9);
  }
  SUBCASE("empty mask rejected") {
    Tape t;
    Value lp = t.log_softmax_rows(t.leaf(Matrix(2, 2)));
    std::vector<int> labels = {0, 1};
    CHECK_THROWS_AS(nll_loss(t, lp, labels, {}), std::invalid_argument);
  }
  SUBCASE("gradient against logits passes finite differences") {
    Rng r(41);
    std::vector<NamedMatrix> params = {{"logits", r.normal_matrix(5, 3)}};
    std::vector<int> labels = {0, 2, 1, 0, 2};
    std::vector<int> mask = {0, 2, 4};
    double err = grad_check(
        [&](Tape& t, const std::vector<Value>& p) {
          return nll_loss(t, t.log_softmax_rows(p[0]), labels, mask);
        },
        params, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about minus lr times sign") {
    Matrix theta(2, 2, {1, 2, 3, 4});
    Matrix g(2, 2, {0.5, -2.0, 0.01, 3.0});
    Matrix before = theta;
    AdamState st;
    st.m.emplace_back(2, 2);
    st.v.emplace_back(2, 2);
    std::vector<Matrix*> params = {&theta};
    std::vector<const Matrix*> grads = {&g};
    const double lr = 1e-3;
    adam_step(params, grads, st, lr);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double delta = theta(i, j) - before(i, j);
        CHECK(std::fabs(delta) >= 0.99 * lr);
        CHECK(std::fabs(delta) <= lr);
        CHECK(delta * g(i, j) < 0.0);
      }
  }
  SUBCASE("zero gradients leave parameters untouched") {
    Matrix theta(1, 3, {1, 2, 3});
    Matrix g(1, 3);
    Matrix before = theta;
    AdamState st;
    st.m.emplace_back(1, 3);
    st.v.emplace_back(1, 3);
    std::vector<Matrix*> params = {&theta};
    std::vector<const Matrix*> grads = {&g};
    adam_step(params, grads, st, 0.01);
    adam_step(params, grads, st, 0.01);
    CHECK(max_abs_diff(theta, before) == 0.0);
    CHECK(st.step == 2);
  }
  SUBCASE("shape mismatch rejected") {
    Matrix theta(1, 3);
    Matrix g(3, 1);
    AdamState st;
    st.m.emplace_back(1, 3);
    st.v.emplace_back(1, 3);
    std::vector<Matrix*> params = {&theta};
    std::vector<const Matrix*> grads = {&g};
    CHECK_THROWS_AS(adam_step(params, grads, st, 0.01), std::invalid_argument);
  }
}

TEST_CASE("accuracy and auc") {
  SUBCASE("perfect predictions") {
    Matrix logits(3, 2, {5, 0, 0, 5, 5, 0});
    std::vector<int> labels = {0, 1, 0};
    CHECK(accuracy(logits, labels, {0, 1, 2}) == 1.0);
  }
  SUBCASE("argmax ties resolve to the lowest class") {
    Matrix logits(1, 3, {2, 2, 2});
    CHECK(accuracy(logits, {0}, {0}) == 1.0);
    CHECK(accuracy(logits, {1}, {0}) == 0.0);
  }
  SUBCASE("constant scores give one half") {
    std::vector<double> scores = {1, 1, 1, 1};
    std::vector<int> labels = {0, 1, 0, 1};
    CHECK(roc_auc(scores, labels, {0, 1, 2, 3}) == doctest::Approx(0.5));
  }
  SUBCASE("scores equal to labels give one") {
    std::vector<double> scores = {0, 1, 0, 1};
    std::vector<int> labels = {0, 1, 0, 1};
    CHECK(roc_auc(scores, labels, {0, 1, 2, 3}) == doctest::Approx(1.0));
  }
  SUBCASE("tied block spanning both classes is averaged") {
    std::vector<double> scores = {0.1, 0.5, 0.5, 0.9};
    std::vector<int> labels = {0, 0, 1, 1};
    // pairs: (0.5 vs 0.1) win, (0.5 vs 0.5) half, (0.9 vs both) wins
    CHECK(roc_auc(scores, labels, {0, 1, 2, 3}) == doctest::Approx(0.875));
  }
  SUBCASE("single-class mask rejected") {
    std::vector<double> scores = {0.1, 0.2};
    std::vector<int> labels = {1, 1};
    CHECK_THROWS_AS(roc_auc(scores, labels, {0, 1}), std::invalid_argument);
  }
}

TEST_CASE("training loop") {
  Dataset data = gen_sbm(60, 2, 0.25, 0.02, 4, 0.3, 19);
  ModelConfig mc;
  mc.input_dim = 4;
  mc.hidden_dim = 8;
  mc.heads = 2;
  mc.local_layers = 1;
  mc.global_layers = 1;
  mc.classes = 2;
  TrainConfig tc;
  tc.warmup_epochs = 3;
  tc.main_epochs = 8;
  tc.seed = 5;

  SUBCASE("no warmup leaves only full-stage log rows") {
    TrainConfig t2 = tc;
    t2.warmup_epochs = 0;
    TrainResult r = train(init_model(mc, 1), data, t2);
    REQUIRE(r.log.size() == 8);
    for (const auto& rec : r.log) CHECK(rec.stage == "full");
  }
  SUBCASE("log stages follow the two phases") {
    TrainResult r = train(init_model(mc, 1), data, tc);
    REQUIRE(r.log.size() == 11);
    CHECK(r.log[0].stage == "warmup");
    CHECK(r.log[2].stage == "warmup");
    CHECK(r.log[3].stage == "full");
  }
  SUBCASE("reproducible: identical metrics logs for identical seeds") {
    TrainResult a = train(init_model(mc, 1), data, tc);
    TrainResult b = train(init_model(mc, 1), data, tc);
    CHECK(metrics_csv(a.log) == metrics_csv(b.log));
  }
  SUBCASE("returned model attains the best logged validation metric") {
    TrainResult r = train(init_model(mc, 1), data, tc);
    double best = 0.0;
    for (const auto& rec : r.log)
      if (rec.stage == "full") best = std::max(best, rec.val_metric);
    const Metrics m = evaluate(r.model, data, Split::valid, tc.metric);
    CHECK(m.accuracy == doctest::Approx(best).epsilon(1e-12));
  }
  SUBCASE("mini-batch training produces identical evaluation logits") {
    TrainConfig t2 = tc;
    t2.batch_parts = 3;
    t2.warmup_epochs = 1;
    t2.main_epochs = 2;
    TrainResult r = train(init_model(mc, 1), data, t2);
    const Metrics a = evaluate(r.model, data, Split::test, Metric::accuracy);
    const Metrics b = evaluate(r.model, data, Split::test, Metric::accuracy);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
  }
  SUBCASE("empty train mask rejected") {
    Dataset no_train = data;
    for (auto& s : no_train.splits)
      if (s == Split::train) s = Split::none;
    CHECK_THROWS_AS(train(init_model(mc, 1), no_train, tc), std::invalid_argument);
  }
}

TEST_CASE("evaluate") {
  Dataset data = gen_sbm(40, 2, 0.3, 0.02, 4, 0.2, 23);
  ModelConfig mc;
  mc.input_dim = 4;
  mc.hidden_dim = 8;
  mc.heads = 2;
  mc.local_layers = 1;
  mc.global_layers = 0;
  mc.classes = 2;
  PolynormerModel model = init_model(mc, 2);
  SUBCASE("deterministic") {
    Metrics a = evaluate(model, data, Split::test, Metric::accuracy);
    Metrics b = evaluate(model, data, Split::test, Metric::accuracy);
    CHECK(a.loss == b.loss);
    CHECK(a.accuracy == b.accuracy);
  }
  SUBCASE("auc on a multiclass task is rejected") {
    Dataset multi = gen_sbm(30, 3, 0.3, 0.02, 4, 0.2, 29);
    ModelConfig mc3 = mc;
    mc3.classes = 3;
    CHECK_THROWS_AS(evaluate(init_model(mc3, 2), multi, Split::test, Metric::auc),
                    std::invalid_argument);
  }
  SUBCASE("a small model memorizes a tiny task") {
    Dataset tiny = gen_sbm(20, 2, 0.4, 0.05, 4, 0.2, 31);
    for (auto& s : tiny.splits) s = Split::train;
    TrainConfig tc;
    tc.warmup_epochs = 100;
    tc.main_epochs = 400;
    tc.lr = 0.01;
    tc.seed = 3;
    TrainResult r = train(init_model(mc, 4), tiny, tc);
    CHECK(evaluate(r.model, tiny, Split::train, Metric::accuracy).accuracy == 1.0);
  }
}
