#include "pn/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pn {

const Matrix& Value::val() const {
  if (!tape_) throw std::logic_error("Value: empty handle");
  return tape_->val_of(id_);
}

Value Tape::push(Matrix value, std::function<void(const Matrix&)> backprop) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backprop)});
  return Value(this, int(nodes_.size()) - 1);
}

void Tape::check_owned(Value v, const char* op) const {
  if (v.tape_ != this || v.id_ < 0 || v.id_ >= int(nodes_.size()))
    throw std::logic_error(std::string(op) + ": value belongs to a different record");
}

Matrix& Tape::grad_ref(int id) const {
  Matrix& g = nodes_[std::size_t(id)].grad;
  if (g.empty() && !nodes_[std::size_t(id)].value.empty()) {
    const Matrix& v = nodes_[std::size_t(id)].value;
    g = Matrix(v.rows(), v.cols());
  }
  return g;
}

void Tape::accumulate(int id, const Matrix& g) {
  Matrix& dst = grad_ref(id);
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += g.data()[i];
}

Value Tape::leaf(Matrix m) { return push(std::move(m), nullptr); }

namespace {
[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " +
                              b.shape_str());
}
}  // namespace

Value Tape::matmul(Value a, Value b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  const int ai = a.id(), bi = b.id();
  Matrix out = pn::matmul(val_of(ai), val_of(bi));
  return push(std::move(out), [this, ai, bi](const Matrix& g) {
    accumulate(ai, pn::matmul(g, pn::transpose(val_of(bi))));
    accumulate(bi, pn::matmul(pn::transpose(val_of(ai)), g));
  });
}

Value Tape::transpose(Value a) {
  check_owned(a, "transpose");
  const int ai = a.id();
  return push(pn::transpose(val_of(ai)),
              [this, ai](const Matrix& g) { accumulate(ai, pn::transpose(g)); });
}

Value Tape::add(Value a, Value b) {
  check_owned(a, "add");
  check_owned(b, "add");
  const int ai = a.id(), bi = b.id();
  if (!val_of(ai).same_shape(val_of(bi))) shape_error("add", val_of(ai), val_of(bi));
  return push(pn::add(val_of(ai), val_of(bi)), [this, ai, bi](const Matrix& g) {
    accumulate(ai, g);
    accumulate(bi, g);
  });
}

Value Tape::sub(Value a, Value b) {
  check_owned(a, "subtract");
  check_owned(b, "subtract");
  const int ai = a.id(), bi = b.id();
  if (!val_of(ai).same_shape(val_of(bi))) shape_error("subtract", val_of(ai), val_of(bi));
  return push(pn::sub(val_of(ai), val_of(bi)), [this, ai, bi](const Matrix& g) {
    accumulate(ai, g);
    accumulate(bi, pn::scale(g, -1.0));
  });
}

Value Tape::hadamard(Value a, Value b) {
  check_owned(a, "hadamard");
  check_owned(b, "hadamard");
  const int ai = a.id(), bi = b.id();
  if (!val_of(ai).same_shape(val_of(bi))) shape_error("hadamard", val_of(ai), val_of(bi));
  return push(pn::hadamard(val_of(ai), val_of(bi)), [this, ai, bi](const Matrix& g) {
    accumulate(ai, pn::hadamard(g, val_of(bi)));
    accumulate(bi, pn::hadamard(g, val_of(ai)));
  });
}

Value Tape::scale(Value a, double c) {
  check_owned(a, "scale");
  const int ai = a.id();
  return push(pn::scale(val_of(ai), c),
              [this, ai, c](const Matrix& g) { accumulate(ai, pn::scale(g, c)); });
}

Value Tape::sigmoid(Value a) {
  check_owned(a, "sigmoid");
  const int ai = a.id();
  Matrix out = pn::map(val_of(ai), sigmoid_scalar);
  Matrix saved = out;
  return push(std::move(out), [this, ai, saved](const Matrix& g) {
    Matrix d = g;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double s = saved.data()[i];
      d.data()[i] *= s * (1.0 - s);
    }
    accumulate(ai, d);
  });
}

Value Tape::relu(Value a) {
  check_owned(a, "relu");
  const int ai = a.id();
  Matrix out = val_of(ai);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
  return push(std::move(out), [this, ai](const Matrix& g) {
    Matrix d = g;
    const Matrix& x = val_of(ai);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x.data()[i] <= 0.0) d.data()[i] = 0.0;
    accumulate(ai, d);
  });
}

Value Tape::leaky_relu(Value a, double slope) {
  check_owned(a, "leaky_relu");
  const int ai = a.id();
  Matrix out = val_of(ai);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < 0.0) out.data()[i] *= slope;
  return push(std::move(out), [this, ai, slope](const Matrix& g) {
    Matrix d = g;
    const Matrix& x = val_of(ai);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x.data()[i] < 0.0) d.data()[i] *= slope;
    accumulate(ai, d);
  });
}

Value Tape::exp(Value a) {
  check_owned(a, "exponential");
  const int ai = a.id();
  Matrix out = val_of(ai);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::exp(out.data()[i]);
  Matrix saved = out;
  return push(std::move(out), [this, ai, saved](const Matrix& g) {
    accumulate(ai, pn::hadamard(g, saved));
  });
}

Value Tape::row_sum(Value a) {
  check_owned(a, "row_sum");
  const int ai = a.id();
  const Matrix& x = val_of(ai);
  Matrix out(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < x.cols(); ++j) s += x(i, j);
    out(i, 0) = s;
  }
  return push(std::move(out), [this, ai](const Matrix& g) {
    const Matrix& x = val_of(ai);
    Matrix d(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) d(i, j) = g(i, 0);
    accumulate(ai, d);
  });
}

Value Tape::col_sum(Value a) {
  check_owned(a, "column_sum");
  const int ai = a.id();
  const Matrix& x = val_of(ai);
  Matrix out(1, x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  return push(std::move(out), [this, ai](const Matrix& g) {
    const Matrix& x = val_of(ai);
    Matrix d(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) d(i, j) = g(0, j);
    accumulate(ai, d);
  });
}

Value Tape::broadcast_rows(Value row_vec, int rows) {
  check_owned(row_vec, "broadcast_row_vector");
  const int ai = row_vec.id();
  const Matrix& x = val_of(ai);
  if (x.rows() != 1)
    throw std::invalid_argument("broadcast_row_vector: expected 1x" + std::to_string(x.cols()) +
                                ", got " + x.shape_str());
  Matrix out(rows, x.cols());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < x.cols(); ++j) out(i, j) = x(0, j);
  return push(std::move(out), [this, ai](const Matrix& g) {
    Matrix d(1, g.cols());
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) d(0, j) += g(i, j);
    accumulate(ai, d);
  });
}

Value Tape::broadcast_cols(Value col_vec, int cols) {
  check_owned(col_vec, "broadcast_col_vector");
  const int ai = col_vec.id();
  const Matrix& x = val_of(ai);
  if (x.cols() != 1)
    throw std::invalid_argument("broadcast_col_vector: expected " + std::to_string(x.rows()) +
                                "x1, got " + x.shape_str());
  Matrix out(x.rows(), cols);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = x(i, 0);
  return push(std::move(out), [this, ai](const Matrix& g) {
    Matrix d(g.rows(), 1);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) d(i, 0) += g(i, j);
    accumulate(ai, d);
  });
}

Value Tape::concat_cols(Value a, Value b) {
  check_owned(a, "concat_cols");
  check_owned(b, "concat_cols");
  const int ai = a.id(), bi = b.id();
  const Matrix& x = val_of(ai);
  const Matrix& y = val_of(bi);
  if (x.rows() != y.rows()) shape_error("concat_cols", x, y);
  Matrix out(x.rows(), x.cols() + y.cols());
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    for (int j = 0; j < y.cols(); ++j) out(i, x.cols() + j) = y(i, j);
  }
  const int split = x.cols();
  return push(std::move(out), [this, ai, bi, split](const Matrix& g) {
    Matrix da(g.rows(), split);
    Matrix db(g.rows(), g.cols() - split);
    for (int i = 0; i < g.rows(); ++i) {
      for (int j = 0; j < split; ++j) da(i, j) = g(i, j);
      for (int j = split; j < g.cols(); ++j) db(i, j - split) = g(i, j);
    }
    accumulate(ai, da);
    accumulate(bi, db);
  });
}

Value Tape::slice_cols(Value a, int begin, int end) {
  check_owned(a, "slice_cols");
  const int ai = a.id();
  const Matrix& x = val_of(ai);
  if (begin < 0 || end > x.cols() || begin >= end)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") invalid for " + x.shape_str());
  Matrix out(x.rows(), end - begin);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = begin; j < end; ++j) out(i, j - begin) = x(i, j);
  return push(std::move(out), [this, ai, begin](const Matrix& g) {
    const Matrix& x = val_of(ai);
    Matrix d(x.rows(), x.cols());
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) d(i, begin + j) = g(i, j);
    accumulate(ai, d);
  });
}

Value Tape::divide(Value a, Value b) {
  check_owned(a, "elementwise_divide");
  check_owned(b, "elementwise_divide");
  const int ai = a.id(), bi = b.id();
  const Matrix& x = val_of(ai);
  const Matrix& y = val_of(bi);
  if (!x.same_shape(y)) shape_error("elementwise_divide", x, y);
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j)
      if (y(i, j) == 0.0)
        throw std::invalid_argument("elementwise_divide: zero denominator at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] /= y.data()[i];
  Matrix saved = out;
  return push(std::move(out), [this, ai, bi, saved](const Matrix& g) {
    const Matrix& y = val_of(bi);
    Matrix da = g;
    Matrix db = g;
    for (std::size_t i = 0; i < da.size(); ++i) {
      da.data()[i] /= y.data()[i];
      db.data()[i] *= -saved.data()[i] / y.data()[i];
    }
    accumulate(ai, da);
    accumulate(bi, db);
  });
}

Value Tape::spmm(const CsrMatrix& a, Value v) {
  check_owned(v, "spmm");
  const int vi = v.id();
  const Matrix& x = val_of(vi);
  if (a.cols != x.rows())
    throw std::invalid_argument("spmm: shape mismatch, sparse " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs dense " + x.shape_str());
  Matrix out(a.rows, x.cols());
  for (int i = 0; i < a.rows; ++i)
    for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e) {
      const double w = a.values[e];
      const int j = a.col_indices[e];
      for (int c = 0; c < x.cols(); ++c) out(i, c) += w * x(j, c);
    }
  // Pattern and values are captured by copy; the caller's CSR may go away.
  CsrMatrix saved = a;
  return push(std::move(out), [this, vi, saved](const Matrix& g) {
    const Matrix& x = val_of(vi);
    Matrix d(x.rows(), x.cols());
    for (int i = 0; i < saved.rows; ++i)
      for (int e = saved.row_offsets[i]; e < saved.row_offsets[i + 1]; ++e) {
        const double w = saved.values[e];
        const int j = saved.col_indices[e];
        for (int c = 0; c < x.cols(); ++c) d(j, c) += w * g(i, c);
      }
    accumulate(vi, d);
  });
}

Value Tape::spmm(const CsrMatrix& a, Value edge_values, Value v) {
  check_owned(edge_values, "spmm");
  check_owned(v, "spmm");
  const int ei = edge_values.id(), vi = v.id();
  const Matrix& ev = val_of(ei);
  const Matrix& x = val_of(vi);
  if (ev.cols() != 1 || ev.rows() != a.nnz())
    throw std::invalid_argument("spmm: edge values must be nnz x 1, got " + ev.shape_str() +
                                " for nnz=" + std::to_string(a.nnz()));
  if (a.cols != x.rows())
    throw std::invalid_argument("spmm: shape mismatch, sparse " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs dense " + x.shape_str());
  Matrix out(a.rows, x.cols());
  for (int i = 0; i < a.rows; ++i)
    for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e) {
      const double w = ev(e, 0);
      const int j = a.col_indices[e];
      for (int c = 0; c < x.cols(); ++c) out(i, c) += w * x(j, c);
    }
  std::vector<int> offsets = a.row_offsets;
  std::vector<int> cols = a.col_indices;
  return push(std::move(out), [this, ei, vi, offsets, cols](const Matrix& g) {
    const Matrix& ev = val_of(ei);
    const Matrix& x = val_of(vi);
    Matrix de(ev.rows(), 1);
    Matrix dv(x.rows(), x.cols());
    const int rows = int(offsets.size()) - 1;
    for (int i = 0; i < rows; ++i)
      for (int e = offsets[std::size_t(i)]; e < offsets[std::size_t(i) + 1]; ++e) {
        const int j = cols[std::size_t(e)];
        double dot = 0.0;
        for (int c = 0; c < x.cols(); ++c) {
          dot += g(i, c) * x(j, c);
          dv(j, c) += ev(e, 0) * g(i, c);
        }
        de(e, 0) = dot;
      }
    accumulate(ei, de);
    accumulate(vi, dv);
  });
}

Value Tape::segment_softmax(Value scores, std::span<const int> offsets) {
  check_owned(scores, "segment_softmax");
  const int si = scores.id();
  const Matrix& x = val_of(si);
  if (x.cols() != 1)
    throw std::invalid_argument("segment_softmax: expected column vector, got " + x.shape_str());
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows())
    throw std::invalid_argument("segment_softmax: offsets must cover the score vector");
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
    if (offsets[s] >= offsets[s + 1])
      throw std::invalid_argument("segment_softmax: empty segment " + std::to_string(s));

  Matrix out(x.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    double mx = x(offsets[s], 0);
    for (int i = offsets[s]; i < offsets[s + 1]; ++i) mx = std::max(mx, x(i, 0));
    double denom = 0.0;
    for (int i = offsets[s]; i < offsets[s + 1]; ++i) {
      out(i, 0) = std::exp(x(i, 0) - mx);
      denom += out(i, 0);
    }
    for (int i = offsets[s]; i < offsets[s + 1]; ++i) out(i, 0) /= denom;
  }
  Matrix saved = out;
  std::vector<int> offs(offsets.begin(), offsets.end());
  return push(std::move(out), [this, si, saved, offs](const Matrix& g) {
    Matrix d(saved.rows(), 1);
    for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
      double dot = 0.0;
      for (int i = offs[s]; i < offs[s + 1]; ++i) dot += g(i, 0) * saved(i, 0);
      for (int i = offs[s]; i < offs[s + 1]; ++i)
        d(i, 0) = saved(i, 0) * (g(i, 0) - dot);
    }
    accumulate(si, d);
  });
}

Value Tape::layer_norm_rows(Value x, Value gain, Value shift, double eps) {
  check_owned(x, "layer_norm_rows");
  check_owned(gain, "layer_norm_rows");
  check_owned(shift, "layer_norm_rows");
  const int xi = x.id(), gi = gain.id(), si = shift.id();
  const Matrix& in = val_of(xi);
  const Matrix& gn = val_of(gi);
  const Matrix& sh = val_of(si);
  if (gn.rows() != 1 || gn.cols() != in.cols() || sh.rows() != 1 || sh.cols() != in.cols())
    throw std::invalid_argument("layer_norm_rows: gain/shift must be 1x" +
                                std::to_string(in.cols()) + ", got " + gn.shape_str() + " and " +
                                sh.shape_str());
  if (eps < 0.0) throw std::invalid_argument("layer_norm_rows: eps must be >= 0");

  const int n = in.rows(), m = in.cols();
  Matrix xhat(n, m);
  Matrix inv_std(n, 1);
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += in(i, j);
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) {
      const double c = in(i, j) - mean;
      var += c * c;
    }
    var /= m;
    const double denom = std::sqrt(var + eps);
    // A constant row with eps == 0 normalizes to zero, not NaN.
    const double is = denom > 0.0 ? 1.0 / denom : 0.0;
    inv_std(i, 0) = is;
    for (int j = 0; j < m; ++j) xhat(i, j) = (in(i, j) - mean) * is;
  }
  Matrix out(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = xhat(i, j) * gn(0, j) + sh(0, j);

  return push(std::move(out), [this, xi, gi, si, xhat, inv_std](const Matrix& g) {
    const Matrix& gn = val_of(gi);
    const int n = g.rows(), m = g.cols();
    Matrix dgain(1, m);
    Matrix dshift(1, m);
    Matrix dx(n, m);
    for (int i = 0; i < n; ++i) {
      double mean_dy = 0.0, mean_dy_xhat = 0.0;
      for (int j = 0; j < m; ++j) {
        const double dy = g(i, j) * gn(0, j);
        mean_dy += dy;
        mean_dy_xhat += dy * xhat(i, j);
        dgain(0, j) += g(i, j) * xhat(i, j);
        dshift(0, j) += g(i, j);
      }
      mean_dy /= m;
      mean_dy_xhat /= m;
      for (int j = 0; j < m; ++j) {
        const double dy = g(i, j) * gn(0, j);
        dx(i, j) = inv_std(i, 0) * (dy - mean_dy - xhat(i, j) * mean_dy_xhat);
      }
    }
    accumulate(xi, dx);
    accumulate(gi, dgain);
    accumulate(si, dshift);
  });
}

Value Tape::log_softmax_rows(Value x) {
  check_owned(x, "log_softmax_rows");
  const int xi = x.id();
  const Matrix& in = val_of(xi);
  const int n = in.rows(), m = in.cols();
  Matrix out(n, m);
  for (int i = 0; i < n; ++i) {
    double mx = in(i, 0);
    for (int j = 1; j < m; ++j) mx = std::max(mx, in(i, j));
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += std::exp(in(i, j) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < m; ++j) out(i, j) = in(i, j) - lse;
  }
  Matrix saved = out;
  return push(std::move(out), [this, xi, saved](const Matrix& g) {
    const int n = g.rows(), m = g.cols();
    Matrix d(n, m);
    for (int i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < m; ++j) gsum += g(i, j);
      for (int j = 0; j < m; ++j) d(i, j) = g(i, j) - std::exp(saved(i, j)) * gsum;
    }
    accumulate(xi, d);
  });
}

Value Tape::sum_all(Value a) { return col_sum(row_sum(a)); }

void Tape::backward(Value loss) {
  check_owned(loss, "backward");
  if (backward_done_) throw std::logic_error("backward: record already consumed");
  const Matrix& l = val_of(loss.id());
  if (l.rows() != 1 || l.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1, got " + l.shape_str());
  backward_done_ = true;
  grad_ref(loss.id())(0, 0) = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    const Node& node = nodes_[std::size_t(i)];
    if (node.grad.empty() || !node.backprop) continue;
    node.backprop(node.grad);
  }
}

const Matrix& Tape::grad(Value v) const {
  check_owned(v, "grad");
  return grad_ref(v.id());
}

}  // namespace pn
