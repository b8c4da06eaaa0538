#include "pn/mpoly.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pn {

MPoly MPoly::variable(int nvars, int index) {
  if (index < 0 || index >= nvars) throw std::invalid_argument("MPoly: variable out of range");
  MPoly p(nvars);
  std::vector<int> e(std::size_t(nvars), 0);
  e[std::size_t(index)] = 1;
  p.terms_[std::move(e)] = 1.0;
  return p;
}

MPoly MPoly::constant(int nvars, double c) {
  MPoly p(nvars);
  if (std::fabs(c) >= kPruneEps) p.terms_[std::vector<int>(std::size_t(nvars), 0)] = c;
  return p;
}

void MPoly::prune() {
  for (auto it = terms_.begin(); it != terms_.end();)
    it = std::fabs(it->second) < kPruneEps ? terms_.erase(it) : std::next(it);
}

MPoly MPoly::operator+(const MPoly& o) const {
  if (nvars_ != o.nvars_) throw std::invalid_argument("MPoly: variable count mismatch");
  MPoly out = *this;
  for (const auto& [e, c] : o.terms_) out.terms_[e] += c;
  out.prune();
  return out;
}

MPoly MPoly::operator*(const MPoly& o) const {
  if (nvars_ != o.nvars_) throw std::invalid_argument("MPoly: variable count mismatch");
  MPoly out(nvars_);
  for (const auto& [ea, ca] : terms_)
    for (const auto& [eb, cb] : o.terms_) {
      std::vector<int> e = ea;
      for (std::size_t i = 0; i < e.size(); ++i) e[i] += eb[i];
      out.terms_[std::move(e)] += ca * cb;
    }
  out.prune();
  return out;
}

MPoly MPoly::scaled(double c) const {
  MPoly out(nvars_);
  for (const auto& [e, v] : terms_) out.terms_[e] = v * c;
  out.prune();
  return out;
}

double MPoly::coefficient(const std::vector<int>& exponents) const {
  auto it = terms_.find(exponents);
  return it == terms_.end() ? 0.0 : it->second;
}

void MPoly::add_term(std::vector<int> exponents, double coeff) {
  if (int(exponents.size()) != nvars_)
    throw std::invalid_argument("MPoly: exponent vector length mismatch");
  terms_[std::move(exponents)] += coeff;
  prune();
}

double MPoly::eval(const std::vector<double>& point) const {
  if (int(point.size()) != nvars_) throw std::invalid_argument("MPoly: point length mismatch");
  double acc = 0.0;
  for (const auto& [e, c] : terms_) {
    double term = c;
    for (std::size_t i = 0; i < e.size(); ++i)
      for (int k = 0; k < e[i]; ++k) term *= point[i];
    acc += term;
  }
  return acc;
}

int MPoly::total_degree() const {
  int deg = -1;
  for (const auto& [e, c] : terms_) {
    (void)c;
    int d = 0;
    for (int x : e) d += x;
    deg = std::max(deg, d);
  }
  return deg;
}

double MPoly::max_coeff_diff(const MPoly& o) const {
  double m = 0.0;
  for (const auto& [e, c] : terms_) m = std::max(m, std::fabs(c - o.coefficient(e)));
  for (const auto& [e, c] : o.terms_) m = std::max(m, std::fabs(c - coefficient(e)));
  return m;
}

MPoly MPoly::relabeled(const std::vector<int>& perm) const {
  if (int(perm.size()) != nvars_) throw std::invalid_argument("MPoly: perm length mismatch");
  MPoly out(nvars_);
  for (const auto& [e, c] : terms_) {
    std::vector<int> ne(std::size_t(nvars_), 0);
    for (std::size_t i = 0; i < e.size(); ++i) ne[std::size_t(perm[i])] = e[i];
    out.terms_[std::move(ne)] += c;
  }
  out.prune();
  return out;
}

BaseModelWeights zero_base_weights(int n, int layers) {
  BaseModelWeights w;
  w.w.assign(std::size_t(layers), Matrix(n, n));
  w.b.assign(std::size_t(layers), Matrix(n, 1));
  return w;
}

namespace {

void check_caps(int n, int layers) {
  if (n < 1 || n > 4 || layers < 1 || layers > 3)
    throw std::invalid_argument("base model oracle: caps are n <= 4, L <= 3 (got n=" +
                                std::to_string(n) + ", L=" + std::to_string(layers) + ")");
}

void check_weights(const BaseModelWeights& weights, int n) {
  for (const Matrix& w : weights.w)
    if (w.rows() != n || w.cols() != n)
      throw std::invalid_argument("base model oracle: W must be n x n");
  for (const Matrix& b : weights.b)
    if (b.rows() != n || b.cols() != 1)
      throw std::invalid_argument("base model oracle: B must be n x 1");
}

}  // namespace

std::vector<MPoly> base_expand(const BaseModelWeights& weights, int n) {
  check_caps(n, weights.layers());
  check_weights(weights, n);
  std::vector<MPoly> state;
  state.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) state.push_back(MPoly::variable(n, i));
  for (int l = 0; l < weights.layers(); ++l) {
    const Matrix& w = weights.w[std::size_t(l)];
    const Matrix& b = weights.b[std::size_t(l)];
    std::vector<MPoly> next;
    next.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) {
      MPoly agg(n);
      for (int j = 0; j < n; ++j) agg = agg + state[std::size_t(j)].scaled(w(i, j));
      next.push_back(agg * (state[std::size_t(i)] + MPoly::constant(n, b(i, 0))));
    }
    state = std::move(next);
  }
  return state;
}

namespace {

/// Coefficient of an ordered index tuple in the B = 0 expansion. A tuple of
/// length 2^L splits into halves (carry branch, aggregated branch); the two
/// branch roots couple through the layer-L weight:
///   c_1((a, b))    = W^(1)[a, b]
///   c_L((P || Q))  = c_{L-1}(P) * W^(L)[P_0, Q_0] * c_{L-1}(Q)
double tuple_coefficient(const BaseModelWeights& weights, const std::vector<int>& tuple,
                         int first, int count, int layer) {
  if (layer == 1) return weights.w[0](tuple[std::size_t(first)], tuple[std::size_t(first + 1)]);
  const int half = count / 2;
  const double left = tuple_coefficient(weights, tuple, first, half, layer - 1);
  const double right = tuple_coefficient(weights, tuple, first + half, half, layer - 1);
  const double link = weights.w[std::size_t(layer - 1)](tuple[std::size_t(first)],
                                                        tuple[std::size_t(first + half)]);
  return left * link * right;
}

}  // namespace

std::vector<MPoly> closed_form_expand(const BaseModelWeights& weights, int n) {
  check_caps(n, weights.layers());
  check_weights(weights, n);
  for (const Matrix& b : weights.b)
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b.data()[i] != 0.0)
        throw std::invalid_argument("closed_form_expand: requires B = 0");

  const int L = weights.layers();
  const int len = 1 << L;
  std::vector<MPoly> out;
  out.reserve(std::size_t(n));
  for (int node = 0; node < n; ++node) {
    MPoly poly(n);
    std::vector<int> tuple(std::size_t(len), 0);
    tuple[0] = node;
    // enumerate the remaining 2^L - 1 positions over [0, n)
    const int free_slots = len - 1;
    std::vector<int> digits(std::size_t(free_slots), 0);
    while (true) {
      for (int k = 0; k < free_slots; ++k) tuple[std::size_t(k) + 1] = digits[std::size_t(k)];
      const double coeff = tuple_coefficient(weights, tuple, 0, len, L);
      if (std::fabs(coeff) >= MPoly::kPruneEps) {
        std::vector<int> exponents(std::size_t(n), 0);
        for (int idx : tuple) exponents[std::size_t(idx)]++;
        poly.add_term(std::move(exponents), coeff);
      }
      int k = free_slots - 1;
      while (k >= 0 && digits[std::size_t(k)] == n - 1) digits[std::size_t(k--)] = 0;
      if (k < 0) break;
      digits[std::size_t(k)]++;
    }
    out.push_back(std::move(poly));
  }
  return out;
}

std::vector<double> base_eval_numeric(const BaseModelWeights& weights,
                                      const std::vector<double>& x) {
  const int n = int(x.size());
  check_weights(weights, n);
  std::vector<double> state = x;
  for (int l = 0; l < weights.layers(); ++l) {
    std::vector<double> next(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double agg = 0.0;
      for (int j = 0; j < n; ++j) agg += weights.w[std::size_t(l)](i, j) * state[std::size_t(j)];
      next[std::size_t(i)] = agg * (state[std::size_t(i)] + weights.b[std::size_t(l)](i, 0));
    }
    state = std::move(next);
  }
  return state;
}

namespace {

/// Recursively place the 0/1 weights realizing x_v * (product of S) at node v
/// with `layers` remaining. At each layer the aggregated branch root is taken
/// from S, preferring a node different from v so the two branch expansions
/// never share a W row. Returns false when a row is already claimed with a
/// conflicting column.
bool assign_selector(BaseModelWeights& weights, int v, std::vector<int> s, int layers) {
  if (layers == 0) return s.empty();
  const int half = (1 << (layers - 1));  // monomial size of each branch: half - 1 plus root
  // candidate roots: prefer q != v, try every distinct value deterministically
  std::vector<int> candidates;
  for (int q : s)
    if (q != v && std::find(candidates.begin(), candidates.end(), q) == candidates.end())
      candidates.push_back(q);
  for (int q : s)
    if (q == v && std::find(candidates.begin(), candidates.end(), q) == candidates.end())
      candidates.push_back(q);
  std::sort(candidates.begin(), candidates.end(),
            [v](int a, int b) { return (a != v) != (b != v) ? (a != v) : a < b; });

  Matrix& w = weights.w[std::size_t(layers - 1)];
  for (int q : candidates) {
    // claim W^(layers)[v, q]; a row may carry a single one only
    bool row_free = true;
    for (int j = 0; j < w.cols(); ++j)
      if (w(v, j) != 0.0 && j != q) row_free = false;
    if (!row_free) continue;
    const double prev = w(v, q);
    w(v, q) = 1.0;

    std::vector<int> rest = s;
    rest.erase(std::find(rest.begin(), rest.end(), q));
    std::sort(rest.begin(), rest.end());
    // split the remaining multiset into the carry branch (stays at v) and the
    // aggregated branch (moves to q), each of size half - 1
    const int branch = half - 1;
    // When both branches root at the same node the expansions coincide, so
    // the two halves must be identical multisets.
    if (q == v) {
      bool even = rest.size() % 2 == 0;
      std::vector<int> left, right;
      for (std::size_t i = 0; even && i < rest.size(); i += 2) {
        if (rest[i] != rest[i + 1]) even = false;
        if (even) {
          left.push_back(rest[i]);
          right.push_back(rest[i]);
        }
      }
      if (even && int(left.size()) == branch) {
        BaseModelWeights snapshot = weights;
        if (assign_selector(weights, v, left, layers - 1)) return true;
        weights = snapshot;
      }
      w(v, q) = prev;
      continue;
    }
    // enumerate splits: choose which copies go to the carry branch
    std::vector<int> choose(rest.size(), 0);
    std::fill(choose.begin(), choose.begin() + branch, 1);
    std::sort(choose.begin(), choose.end());
    do {
      std::vector<int> left, right;
      for (std::size_t i = 0; i < rest.size(); ++i)
        (choose[i] ? left : right).push_back(rest[i]);
      BaseModelWeights snapshot = weights;
      if (assign_selector(weights, v, left, layers - 1) &&
          assign_selector(weights, q, right, layers - 1))
        return true;
      weights = snapshot;
    } while (std::next_permutation(choose.begin(), choose.end()));
    w(v, q) = prev;
  }
  return false;
}

}  // namespace

BaseModelWeights select_monomial_params(int target, const std::vector<int>& monomial_indices,
                                        int n, int layers) {
  check_caps(n, layers);
  if (target < 0 || target >= n)
    throw std::invalid_argument("select_monomial_params: target node out of range");
  if (int(monomial_indices.size()) != (1 << layers) - 1)
    throw std::invalid_argument("select_monomial_params: tuple must have 2^L - 1 indices");
  for (int idx : monomial_indices)
    if (idx < 0 || idx >= n)
      throw std::invalid_argument("select_monomial_params: index " + std::to_string(idx) +
                                  " out of range");

  BaseModelWeights weights = zero_base_weights(n, layers);
  if (!assign_selector(weights, target, monomial_indices, layers))
    throw std::runtime_error("select_monomial_params: no conflict-free assignment found");

  // the construction is verified before being returned
  const std::vector<MPoly> polys = base_expand(weights, n);
  std::vector<int> exponents(std::size_t(n), 0);
  exponents[std::size_t(target)] = 1;
  for (int idx : monomial_indices) exponents[std::size_t(idx)]++;
  const MPoly& p = polys[std::size_t(target)];
  if (p.terms().size() != 1 || std::fabs(p.coefficient(exponents) - 1.0) > 1e-9)
    throw std::runtime_error("select_monomial_params: constructed weights are not exact");
  return weights;
}

std::set<int> degree_spectrum(const std::vector<MPoly>& polys) {
  std::set<int> degrees;
  for (const MPoly& p : polys)
    for (const auto& [e, c] : p.terms()) {
      (void)c;
      int d = 0;
      for (int x : e) d += x;
      degrees.insert(d);
    }
  return degrees;
}

std::vector<MPoly> gt_layer_expand(int n, double wq, double wk, double wv) {
  if (n < 1 || n > 4) throw std::invalid_argument("gt_layer_expand: n capped at 4");
  MPoly sum_sq(n);
  for (int j = 0; j < n; ++j) {
    MPoly xj = MPoly::variable(n, j);
    sum_sq = sum_sq + xj * xj;
  }
  std::vector<MPoly> out;
  out.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i)
    out.push_back((MPoly::variable(n, i) * sum_sq).scaled(wq * wk * wv));
  return out;
}

BaseModelWeights degree3_gap_witness() {
  // Node 0, two layers on two nodes. Layer 1 makes X_0 = x_1 x_0 and
  // X_1 = x_0 (x_1 + 1); layer 2 multiplies them, leaving
  // x_0^2 x_1 + x_0^2 x_1^2. The bias path delivers the odd-degree term the
  // pure recurrence cannot reach.
  BaseModelWeights w = zero_base_weights(2, 2);
  w.w[0](0, 1) = 1.0;
  w.w[0](1, 0) = 1.0;
  w.b[0](1, 0) = 1.0;
  w.w[1](0, 1) = 1.0;
  return w;
}

}  // namespace pn
