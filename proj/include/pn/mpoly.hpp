#pragma once

#include <map>
#include <set>
#include <vector>

#include "pn/matrix.hpp"

namespace pn {

/// Sparse multivariate polynomial over one scalar variable per node: a map
/// from exponent vectors to real coefficients. Coefficients below 1e-12 in
/// magnitude are pruned so term maps stay exact under float accumulation.
class MPoly {
 public:
  static constexpr double kPruneEps = 1e-12;

  MPoly() = default;
  explicit MPoly(int nvars) : nvars_(nvars) {}
  static MPoly variable(int nvars, int index);
  static MPoly constant(int nvars, double c);

  int nvars() const { return nvars_; }
  const std::map<std::vector<int>, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  MPoly operator+(const MPoly& o) const;
  MPoly operator*(const MPoly& o) const;
  MPoly scaled(double c) const;

  double coefficient(const std::vector<int>& exponents) const;
  void add_term(std::vector<int> exponents, double coeff);

  double eval(const std::vector<double>& point) const;
  int total_degree() const;  // -1 for the zero polynomial
  /// Largest absolute coefficient difference against another polynomial.
  double max_coeff_diff(const MPoly& o) const;
  /// Relabel variables: exponent of variable i moves to perm[i].
  MPoly relabeled(const std::vector<int>& perm) const;

 private:
  void prune();
  int nvars_ = 0;
  std::map<std::vector<int>, double> terms_;
};

/// Per-layer weights of the degree-doubling base recurrence
/// X <- (W X) (X + B) with scalar node features.
struct BaseModelWeights {
  std::vector<Matrix> w;  // L matrices, n x n
  std::vector<Matrix> b;  // L column vectors, n x 1
  int layers() const { return int(w.size()); }
};

BaseModelWeights zero_base_weights(int n, int layers);

/// Symbolic expansion of the base recurrence from X_i^(0) = x_i. Term counts
/// grow doubly exponentially, so n <= 4 and L <= 3 are enforced.
std::vector<MPoly> base_expand(const BaseModelWeights& weights, int n);

/// Direct construction of the same polynomials from the per-tuple coefficient
/// products of the layer recursion (requires B = 0). Independent of
/// base_expand: it never runs the recurrence.
std::vector<MPoly> closed_form_expand(const BaseModelWeights& weights, int n);

/// Numeric evaluation of the recurrence at a point; third route used for
/// cross-checking the symbolic paths.
std::vector<double> base_eval_numeric(const BaseModelWeights& weights,
                                      const std::vector<double>& x);

/// 0/1 weight chain under which node `target`'s expansion is exactly
/// x_target times the monomial with the given index tuple (|tuple| = 2^L - 1),
/// with coefficient one and no other terms. Verified internally.
BaseModelWeights select_monomial_params(int target, const std::vector<int>& monomial_indices,
                                        int n, int layers);

/// Union of total degrees over all terms of all node polynomials.
std::set<int> degree_spectrum(const std::vector<MPoly>& polys);

/// Single attention layer with the softmax dropped:
/// x_i' = wq wk wv * x_i * sum_j x_j^2.
std::vector<MPoly> gt_layer_expand(int n, double wq, double wk, double wv);

/// Base-model weights (L = 2, with bias) whose node-0 expansion carries the
/// monomial x_0^2 x_1 with coefficient exactly one; the attention layer above
/// can never produce that monomial.
BaseModelWeights degree3_gap_witness();

}  // namespace pn
