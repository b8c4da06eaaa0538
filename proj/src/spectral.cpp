#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pn/graph.hpp"

namespace pn {

EighResult jacobi_eigh(Matrix a) {
  const int n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("jacobi_eigh: matrix must be square");
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::fabs(a(i, j) - a(j, i)) > 1e-12)
        throw std::invalid_argument("jacobi_eigh: matrix must be symmetric");

  Matrix v = Matrix::identity(n);
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) diag[std::size_t(i)] = a(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return diag[std::size_t(x)] < diag[std::size_t(y)]; });

  EighResult res;
  res.eigenvalues.resize(std::size_t(n));
  res.eigenvectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    res.eigenvalues[std::size_t(k)] = diag[std::size_t(order[std::size_t(k)])];
    for (int i = 0; i < n; ++i) res.eigenvectors(i, k) = v(i, order[std::size_t(k)]);
  }
  return res;
}

Matrix normalized_laplacian(const Graph& g) {
  const int n = g.n;
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int d = std::max(g.degree(i), 1);  // isolated nodes clamp to 1
    inv_sqrt_deg[std::size_t(i)] = 1.0 / std::sqrt(double(d));
  }
  Matrix lap = Matrix::identity(n);
  for (int i = 0; i < n; ++i)
    for (int e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
      const int j = g.col_indices[e];
      lap(i, j) -= inv_sqrt_deg[std::size_t(i)] * inv_sqrt_deg[std::size_t(j)];
    }
  return lap;
}

FiedlerResult fiedler_vector(const Graph& g) {
  if (g.n < 2) throw std::invalid_argument("fiedler_vector: need at least 2 nodes");
  if (g.n > 5000) throw std::invalid_argument("fiedler_vector: dense solve capped at n=5000");

  const EighResult eig = jacobi_eigh(normalized_laplacian(g));
  const int n = g.n;

  // D^{1/2} 1, the exact eigenvector of the zero eigenvalue on a connected
  // graph. The second vector is orthogonalized against it so degenerate zero
  // eigenspaces (disconnected graphs) still yield an informative direction.
  Matrix u(n, 1);
  double unorm = 0.0;
  for (int i = 0; i < n; ++i) {
    u(i, 0) = std::sqrt(double(std::max(g.degree(i), 1)));
    unorm += u(i, 0) * u(i, 0);
  }
  unorm = std::sqrt(unorm);
  for (int i = 0; i < n; ++i) u(i, 0) /= unorm;

  auto project_out_u = [&](Matrix w) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += w(i, 0) * u(i, 0);
    for (int i = 0; i < n; ++i) w(i, 0) -= dot * u(i, 0);
    return w;
  };

  Matrix v2(n, 1);
  for (int i = 0; i < n; ++i) v2(i, 0) = eig.eigenvectors(i, 1);
  Matrix w = project_out_u(v2);
  double norm = 0.0;
  for (int i = 0; i < n; ++i) norm += w(i, 0) * w(i, 0);
  if (std::sqrt(norm) < 1e-8) {
    // v2 collapsed onto D^{1/2}1: the smallest two eigenvectors span the
    // degenerate space in some rotated basis; take the other one.
    for (int i = 0; i < n; ++i) w(i, 0) = eig.eigenvectors(i, 0);
    w = project_out_u(w);
    norm = 0.0;
    for (int i = 0; i < n; ++i) norm += w(i, 0) * w(i, 0);
  }
  norm = std::sqrt(norm);
  if (norm <= 0.0) throw std::runtime_error("fiedler_vector: degenerate eigenbasis");
  for (int i = 0; i < n; ++i) w(i, 0) /= norm;

  for (int i = 0; i < n; ++i) {
    if (std::fabs(w(i, 0)) > 1e-12) {
      if (w(i, 0) < 0.0)
        for (int k = 0; k < n; ++k) w(k, 0) = -w(k, 0);
      break;
    }
  }

  FiedlerResult res;
  res.vector = std::move(w);
  res.eigenvalue = eig.eigenvalues[1];
  return res;
}

}  // namespace pn
