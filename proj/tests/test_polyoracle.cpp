#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pn/mpoly.hpp"

using namespace pn;

TEST_CASE("polynomial arithmetic") {
  SUBCASE("product of two variables") {
    MPoly p = MPoly::variable(2, 0) * MPoly::variable(2, 1);
    CHECK(p.coefficient({1, 1}) == 1.0);
    CHECK(p.terms().size() == 1);
  }
  SUBCASE("p plus minus p cancels to zero") {
    MPoly p = MPoly::variable(3, 1) * MPoly::variable(3, 2);
    CHECK((p + p.scaled(-1.0)).is_zero());
  }
  SUBCASE("binomial square") {
    MPoly s = MPoly::variable(2, 0) + MPoly::variable(2, 1);
    MPoly sq = s * s;
    CHECK(sq.coefficient({2, 0}) == 1.0);
    CHECK(sq.coefficient({1, 1}) == 2.0);
    CHECK(sq.coefficient({0, 2}) == 1.0);
  }
  SUBCASE("variable count mismatch rejected") {
    CHECK_THROWS_AS(MPoly::variable(2, 0) * MPoly::variable(3, 0), std::invalid_argument);
  }
}

TEST_CASE("base expansion matches hand-expanded layers") {
  SUBCASE("three nodes, one layer, shared bias") {
    // node 1 (0-indexed: node 0) of (Wx) .* (x + b):
    // W00 x0^2 + W01 x0 x1 + W02 x0 x2 + b0 (W00 x0 + W01 x1 + W02 x2)
    Rng r(21);
    BaseModelWeights w = zero_base_weights(3, 1);
    w.w[0] = r.normal_matrix(3, 3);
    w.b[0] = r.normal_matrix(3, 1);
    const auto polys = base_expand(w, 3);
    const MPoly& p0 = polys[0];
    CHECK(p0.coefficient({2, 0, 0}) == doctest::Approx(w.w[0](0, 0)));
    CHECK(p0.coefficient({1, 1, 0}) == doctest::Approx(w.w[0](0, 1)));
    CHECK(p0.coefficient({1, 0, 1}) == doctest::Approx(w.w[0](0, 2)));
    CHECK(p0.coefficient({1, 0, 0}) == doctest::Approx(w.b[0](0, 0) * w.w[0](0, 0)));
    CHECK(p0.coefficient({0, 1, 0}) == doctest::Approx(w.b[0](0, 0) * w.w[0](0, 1)));
    CHECK(p0.coefficient({0, 0, 1}) == doctest::Approx(w.b[0](0, 0) * w.w[0](0, 2)));
  }
  SUBCASE("two nodes, one layer, no bias") {
    Rng r(22);
    BaseModelWeights w = zero_base_weights(2, 1);
    w.w[0] = r.normal_matrix(2, 2);
    const auto polys = base_expand(w, 2);
    CHECK(polys[0].coefficient({2, 0}) == doctest::Approx(w.w[0](0, 0)));
    CHECK(polys[0].coefficient({1, 1}) == doctest::Approx(w.w[0](0, 1)));
    CHECK(polys[0].terms().size() == 2);
  }
  SUBCASE("all-ones weights evaluated symbolically and numerically agree") {
    BaseModelWeights w = zero_base_weights(2, 2);
    w.w[0] = Matrix::filled(2, 2, 1.0);
    w.w[1] = Matrix::filled(2, 2, 1.0);
    const auto polys = base_expand(w, 2);
    const std::vector<double> x = {2.0, 3.0};
    const auto numeric = base_eval_numeric(w, x);
    CHECK(polys[0].eval(x) == doctest::Approx(numeric[0]));
    CHECK(polys[1].eval(x) == doctest::Approx(numeric[1]));
  }
  SUBCASE("size caps enforced") {
    CHECK_THROWS_AS(base_expand(zero_base_weights(5, 1), 5), std::invalid_argument);
    CHECK_THROWS_AS(base_expand(zero_base_weights(2, 4), 2), std::invalid_argument);
  }
}

TEST_CASE("closed form equals the recursive expansion") {
  Rng rng(23);
  for (int n = 2; n <= 3; ++n)
    for (int L = 1; L <= 2; ++L) {
      for (int draw = 0; draw < 10; ++draw) {
        Rng r = rng.fork(std::uint64_t(100 * n + 10 * L + draw));
        BaseModelWeights w = zero_base_weights(n, L);
        for (int l = 0; l < L; ++l) w.w[std::size_t(l)] = r.normal_matrix(n, n);
        const auto a = base_expand(w, n);
        const auto b = closed_form_expand(w, n);
        for (int i = 0; i < n; ++i)
          CHECK(a[std::size_t(i)].max_coeff_diff(b[std::size_t(i)]) < 1e-9);
      }
    }
  SUBCASE("zero weights give zero polynomials") {
    const auto polys = closed_form_expand(zero_base_weights(2, 2), 2);
    CHECK(polys[0].is_zero());
    CHECK(polys[1].is_zero());
  }
  SUBCASE("bias must be zero") {
    BaseModelWeights w = zero_base_weights(2, 1);
    w.b[0](0, 0) = 0.5;
    CHECK_THROWS_AS(closed_form_expand(w, 2), std::invalid_argument);
  }
}

TEST_CASE("monomial selector") {
  SUBCASE("L=1 single target") {
    BaseModelWeights w = select_monomial_params(0, {2}, 3, 1);
    const auto polys = base_expand(w, 3);
    CHECK(polys[0].terms().size() == 1);
    CHECK(polys[0].coefficient({1, 0, 1}) == doctest::Approx(1.0));
  }
  SUBCASE("L=2 target with a repeated index") {
    BaseModelWeights w = select_monomial_params(0, {1, 2, 2}, 3, 2);
    const auto polys = base_expand(w, 3);
    CHECK(polys[0].terms().size() == 1);
    CHECK(polys[0].coefficient({1, 1, 2}) == doctest::Approx(1.0));
  }
  SUBCASE("tuples that collide under the naive chain still resolve") {
    // target x0 * (x1 x0 x2) needs reordering to avoid a shared weight row
    BaseModelWeights w = select_monomial_params(0, {1, 0, 2}, 3, 2);
    const auto polys = base_expand(w, 3);
    CHECK(polys[0].terms().size() == 1);
    CHECK(polys[0].coefficient({2, 1, 1}) == doctest::Approx(1.0));
  }
  SUBCASE("three layers resolve via search") {
    BaseModelWeights w = select_monomial_params(1, {0, 0, 1, 1, 2, 2, 2}, 3, 3);
    const auto polys = base_expand(w, 3);
    CHECK(polys[1].terms().size() == 1);
    CHECK(polys[1].coefficient({2, 3, 3}) == doctest::Approx(1.0));
  }
  SUBCASE("random sample of the larger case") {
    // the exhaustive sweep stops at L = 2; spot-check L = 3 tuples
    Rng r(27);
    for (int draw = 0; draw < 10; ++draw) {
      const int node = r.uniform_int(0, 2);
      std::vector<int> tuple(7);
      for (int& t : tuple) t = r.uniform_int(0, 2);
      BaseModelWeights w = select_monomial_params(node, tuple, 3, 3);
      const auto polys = base_expand(w, 3);
      std::vector<int> exponents(3, 0);
      exponents[std::size_t(node)] = 1;
      for (int t : tuple) exponents[std::size_t(t)]++;
      CHECK(polys[std::size_t(node)].terms().size() == 1);
      CHECK(polys[std::size_t(node)].coefficient(exponents) == doctest::Approx(1.0));
    }
  }
  SUBCASE("wrong tuple length rejected") {
    CHECK_THROWS_AS(select_monomial_params(0, {1, 2}, 3, 2), std::invalid_argument);
  }
}

TEST_CASE("degree spectrum") {
  Rng r(24);
  BaseModelWeights w = zero_base_weights(2, 2);
  for (int l = 0; l < 2; ++l) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) w.w[std::size_t(l)](i, j) = r.uniform(0.5, 1.5);
      w.b[std::size_t(l)](i, 0) = r.uniform(0.5, 1.5);
    }
  }
  SUBCASE("generic bias fills every degree up to 2^L") {
    CHECK(degree_spectrum(base_expand(w, 2)) == std::set<int>{1, 2, 3, 4});
  }
  SUBCASE("zero bias leaves only degree 2^L") {
    BaseModelWeights pure = w;
    pure.b[0] = Matrix(2, 1);
    pure.b[1] = Matrix(2, 1);
    CHECK(degree_spectrum(base_expand(pure, 2)) == std::set<int>{4});
  }
  SUBCASE("zero polynomial has an empty spectrum") {
    CHECK(degree_spectrum({MPoly(2)}).empty());
  }
}

TEST_CASE("attention-layer polynomial deficiency") {
  SUBCASE("unit weights reproduce the closed form") {
    const auto polys = gt_layer_expand(2, 1.0, 1.0, 1.0);
    CHECK(polys[0].coefficient({3, 0}) == doctest::Approx(1.0));  // x0^3
    CHECK(polys[0].coefficient({1, 2}) == doctest::Approx(1.0));  // x0 x1^2
    CHECK(polys[0].terms().size() == 2);
  }
  SUBCASE("x0^2 x1 has zero coefficient for every weight setting") {
    Rng r(25);
    for (int draw = 0; draw < 20; ++draw) {
      const auto polys =
          gt_layer_expand(2, r.uniform(-3.0, 3.0), r.uniform(-3.0, 3.0), r.uniform(-3.0, 3.0));
      CHECK(polys[0].coefficient({2, 1}) == 0.0);
    }
  }
  SUBCASE("the gated recurrence reaches the missing monomial") {
    const auto witness = base_expand(degree3_gap_witness(), 2);
    CHECK(witness[0].coefficient({2, 1}) == doctest::Approx(1.0));
  }
}

TEST_CASE("relabeling nodes conjugates the expansion") {
  Rng r(26);
  const int n = 3, L = 2;
  BaseModelWeights w = zero_base_weights(n, L);
  for (int l = 0; l < L; ++l) {
    w.w[std::size_t(l)] = r.normal_matrix(n, n);
    w.b[std::size_t(l)] = r.normal_matrix(n, 1);
  }
  const std::vector<int> perm = {2, 0, 1};
  BaseModelWeights wp = zero_base_weights(n, L);
  for (int l = 0; l < L; ++l) {
    for (int i = 0; i < n; ++i) {
      wp.b[std::size_t(l)](perm[std::size_t(i)], 0) = w.b[std::size_t(l)](i, 0);
      for (int j = 0; j < n; ++j)
        wp.w[std::size_t(l)](perm[std::size_t(i)], perm[std::size_t(j)]) =
            w.w[std::size_t(l)](i, j);
    }
  }
  const auto base = base_expand(w, n);
  const auto conj = base_expand(wp, n);
  for (int i = 0; i < n; ++i) {
    const MPoly expected = base[std::size_t(i)].relabeled(perm);
    CHECK(expected.max_coeff_diff(conj[std::size_t(perm[std::size_t(i)])]) < 1e-12);
  }
}
