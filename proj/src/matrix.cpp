#include "pn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace pn {

namespace alloc_stats {
namespace {
std::int64_t g_current = 0;
std::int64_t g_peak = 0;
std::unordered_map<std::size_t, std::vector<void*>> g_pool;
}  // namespace

std::int64_t current_bytes() { return g_current; }
std::int64_t peak_bytes() { return g_peak; }
void reset_peak() { g_peak = g_current; }

void release_cached() {
  for (auto& [bytes, blocks] : g_pool) {
    (void)bytes;
    for (void* p : blocks) ::operator delete(p);
    blocks.clear();
  }
  g_pool.clear();
}

namespace detail {
void* pooled_allocate(std::size_t bytes) {
  g_current += std::int64_t(bytes);
  if (g_current > g_peak) g_peak = g_current;
  auto it = g_pool.find(bytes);
  if (it != g_pool.end() && !it->second.empty()) {
    void* p = it->second.back();
    it->second.pop_back();
    return p;
  }
  return ::operator new(bytes);
}

void pooled_deallocate(void* p, std::size_t bytes) noexcept {
  g_current -= std::int64_t(bytes);
  try {
    g_pool[bytes].push_back(p);
  } catch (...) {
    ::operator delete(p);
  }
}
}  // namespace detail
}  // namespace alloc_stats

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
  data_.assign(std::size_t(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::initializer_list<double> vals) : Matrix(rows, cols) {
  if (vals.size() != data_.size()) throw std::invalid_argument("Matrix: initializer size mismatch");
  std::copy(vals.begin(), vals.end(), data_.begin());
}

Matrix Matrix::filled(int rows, int cols, double v) {
  Matrix m(rows, cols);
  std::fill(m.data_.begin(), m.data_.end(), v);
  return m;
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch, " + a.shape_str() +
                                " vs " + b.shape_str());
}
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch, " + a.shape_str() + " vs " +
                                b.shape_str());
  Matrix out(a.rows(), b.cols());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    double* out_row = out.data() + std::size_t(i) * m;
    const double* a_row = a.data() + std::size_t(i) * k;
    for (int t = 0; t < k; ++t) {
      const double av = a_row[t];
      if (av == 0.0) continue;
      const double* b_row = b.data() + std::size_t(t) * m;
      for (int j = 0; j < m; ++j) out_row[j] += av * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
  return out;
}

Matrix map(const Matrix& a, double (*f)(double)) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = f(out.data()[i]);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), state_(splitmix64(seed ^ 0xA5A5A5A5DEADBEEFULL)) {
  if (state_ == 0) state_ = 0x853c49e6748fea9bULL;
}

std::uint64_t Rng::next_u64() {
  // xorshift64*; tiny, fast, deterministic everywhere.
  std::uint64_t x = state_;
  x ^= x >> 12;
  x ^= x << 25;
  x ^= x >> 27;
  state_ = x;
  return x * 0x2545F4914F6CDD1DULL;
}

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
  if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t span = std::uint64_t(hi) - std::uint64_t(lo) + 1;
  // rejection sampling keeps the draw unbiased and deterministic
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + int(x % span);
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1)));
}

Matrix Rng::uniform_matrix(int rows, int cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
  return m;
}

Matrix Rng::normal_matrix(int rows, int cols, double stddev) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal();
  return m;
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  shuffle(p);
  return p;
}

}  // namespace pn
