#pragma once

#include <functional>
#include <deque>
#include <span>
#include <vector>

#include "pn/matrix.hpp"
#include "pn/sparse.hpp"

namespace pn {

class Tape;

/// Handle to a matrix inside a computation record. Cheap to copy; owns
/// nothing. Valid only for the tape that produced it.
class Value {
 public:
  Value() = default;
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& val() const;
  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }

 private:
  friend class Tape;
  Value(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Eager reverse-mode record. Built once per forward pass, consumed by a
/// single backward() call, then discarded. Node order is creation order,
/// which is a topological order by construction; backward walks it in
/// reverse and visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Matrix m);

  // Elementwise and linear kernels.
  Value matmul(Value a, Value b);
  Value transpose(Value a);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value hadamard(Value a, Value b);
  Value scale(Value a, double c);
  Value sigmoid(Value a);
  Value relu(Value a);
  Value leaky_relu(Value a, double slope);
  Value exp(Value a);
  Value row_sum(Value a);                      // n x m -> n x 1
  Value col_sum(Value a);                      // n x m -> 1 x m
  Value broadcast_rows(Value row_vec, int rows);  // 1 x m -> rows x m
  Value broadcast_cols(Value col_vec, int cols);  // n x 1 -> n x cols
  Value concat_cols(Value a, Value b);
  Value slice_cols(Value a, int begin, int end);  // half-open column range
  Value divide(Value a, Value b);                 // rejects zero denominators

  // Sparse product A * V with constant A.
  Value spmm(const CsrMatrix& a, Value v);
  // Sparse product where the nonzero values are differentiable: `a` supplies
  // the pattern only, `edge_values` is an nnz x 1 column.
  Value spmm(const CsrMatrix& a, Value edge_values, Value v);

  // Softmax over contiguous segments of a column vector. `offsets` has one
  // more entry than there are segments; each segment must be nonempty.
  Value segment_softmax(Value scores, std::span<const int> offsets);

  // Row-wise layer normalization: zero mean, unit variance with eps inside
  // the square root, then gain/shift (both 1 x cols). Rows with exactly zero
  // variance and eps == 0 map to the shift value.
  Value layer_norm_rows(Value x, Value gain, Value shift, double eps);

  // Numerically stable (max-subtracted) row-wise log-softmax.
  Value log_softmax_rows(Value x);

  Value sum_all(Value a);  // convenience: row_sum then col_sum

  /// Backpropagate from a 1x1 loss. May be called once per tape.
  void backward(Value loss);

  /// Gradient of the last backward()'s loss w.r.t. v; zeros if unreached.
  const Matrix& grad(Value v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Value;
  struct Node {
    Matrix value;
    mutable Matrix grad;  // lazily sized
    std::function<void(const Matrix&)> backprop;  // null for leaves
  };

  Value push(Matrix value, std::function<void(const Matrix&)> backprop);
  const Matrix& val_of(int id) const { return nodes_[std::size_t(id)].value; }
  void accumulate(int id, const Matrix& g);
  Matrix& grad_ref(int id) const;
  void check_owned(Value v, const char* op) const;

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace pn
