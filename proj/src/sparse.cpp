#include "pn/sparse.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pn {

void CsrMatrix::validate() const {
  if (int(row_offsets.size()) != rows + 1)
    throw std::invalid_argument("csr: row_offsets must have rows+1 entries");
  if (row_offsets.front() != 0 || row_offsets.back() != nnz())
    throw std::invalid_argument("csr: row_offsets must start at 0 and end at nnz");
  for (int i = 0; i < rows; ++i)
    if (row_offsets[i] > row_offsets[i + 1])
      throw std::invalid_argument("csr: row_offsets not monotone at row " + std::to_string(i));
  for (int c : col_indices)
    if (c < 0 || c >= cols)
      throw std::invalid_argument("csr: column index " + std::to_string(c) + " out of range");
  if (values.size() != col_indices.size())
    throw std::invalid_argument("csr: values/col_indices length mismatch");
}

CsrMatrix csr_from_triplets(int rows, int cols,
                            std::vector<std::pair<std::pair<int, int>, double>> triplets) {
  std::sort(triplets.begin(), triplets.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_offsets.assign(std::size_t(rows) + 1, 0);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto [rc, v] = triplets[i];
    if (rc.first < 0 || rc.first >= rows || rc.second < 0 || rc.second >= cols)
      throw std::invalid_argument("csr_from_triplets: index out of range");
    if (!m.col_indices.empty() && i > 0 && triplets[i - 1].first == rc) {
      m.values.back() += v;  // merge duplicates
      continue;
    }
    m.col_indices.push_back(rc.second);
    m.values.push_back(v);
    m.row_offsets[std::size_t(rc.first) + 1]++;
  }
  for (int i = 0; i < rows; ++i) m.row_offsets[std::size_t(i) + 1] += m.row_offsets[i];
  m.validate();
  return m;
}

Matrix csr_to_dense(const CsrMatrix& a) {
  Matrix out(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e)
      out(i, a.col_indices[e]) += a.values[e];
  return out;
}

CsrMatrix csr_permute_preserving_order(const CsrMatrix& a, const std::vector<int>& perm) {
  if (int(perm.size()) != a.rows || a.rows != a.cols)
    throw std::invalid_argument("csr_permute: permutation length must match square matrix");
  std::vector<int> inv(perm.size());
  for (int i = 0; i < int(perm.size()); ++i) inv[std::size_t(perm[i])] = i;
  CsrMatrix m;
  m.rows = a.rows;
  m.cols = a.cols;
  m.row_offsets.assign(std::size_t(a.rows) + 1, 0);
  m.col_indices.reserve(a.col_indices.size());
  m.values.reserve(a.values.size());
  for (int new_row = 0; new_row < a.rows; ++new_row) {
    const int old_row = inv[new_row];
    for (int e = a.row_offsets[old_row]; e < a.row_offsets[old_row + 1]; ++e) {
      m.col_indices.push_back(perm[std::size_t(a.col_indices[e])]);
      m.values.push_back(a.values[e]);
    }
    m.row_offsets[std::size_t(new_row) + 1] = int(m.col_indices.size());
  }
  return m;
}

}  // namespace pn
