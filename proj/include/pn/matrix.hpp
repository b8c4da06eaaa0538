#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace pn {

// Peak-memory accounting for matrix payloads. The scaling benchmark samples
// the high-water mark of bytes in use; everything is single-threaded, so
// plain counters suffice. Freed blocks are kept in a per-size pool: the
// differentiation record allocates the same handful of sizes every step, and
// serving them from the pool keeps step timing independent of what the
// system allocator did earlier in the process.
namespace alloc_stats {
std::int64_t current_bytes();
std::int64_t peak_bytes();
void reset_peak();
/// Returns pooled blocks to the system allocator.
void release_cached();
namespace detail {
void* pooled_allocate(std::size_t bytes);
void pooled_deallocate(void* p, std::size_t bytes) noexcept;
}
}  // namespace alloc_stats

template <class T>
struct TrackingAllocator {
  using value_type = T;
  TrackingAllocator() = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(alloc_stats::detail::pooled_allocate(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    alloc_stats::detail::pooled_deallocate(p, n * sizeof(T));
  }
  template <class U>
  bool operator==(const TrackingAllocator<U>&) const {
    return true;
  }
};

/// Dense row-major matrix of 64-bit reals. All model state, activations and
/// gradients use this one type; vectors are 1xN or Nx1 matrices.
class Matrix {
 public:
  using Storage = std::vector<double, TrackingAllocator<double>>;

  Matrix() = default;
  Matrix(int rows, int cols);  // zero-filled
  Matrix(int rows, int cols, std::initializer_list<double> vals);

  static Matrix filled(int rows, int cols, double v);
  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[std::size_t(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[std::size_t(r) * cols_ + c]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  Storage data_;
};

// Plain (unrecorded) kernels. The differentiation tape calls these for its
// forward values; oracle/probe code uses them directly.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix map(const Matrix& a, double (*f)(double));

double sigmoid_scalar(double x);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Deterministic random stream. Hand-rolled transforms so that results are
/// bit-identical across standard libraries, not just across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // standard normal, Box-Muller
  int uniform_int(int lo, int hi);        // inclusive bounds

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = int(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(v[i], v[std::size_t(j)]);
    }
  }

  /// Independent substream; deterministic in (seed, stream).
  Rng fork(std::uint64_t stream) const;

  Matrix uniform_matrix(int rows, int cols, double lo, double hi);
  Matrix normal_matrix(int rows, int cols, double stddev = 1.0);
  std::vector<int> permutation(int n);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pn
