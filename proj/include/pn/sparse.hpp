#pragma once

#include <utility>
#include <vector>

#include "pn/matrix.hpp"

namespace pn {

/// Compressed sparse row matrix. Ops that treat it as a fixed sparsity
/// pattern (attention with learned edge values) ignore `values`.
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_offsets;  // rows + 1 entries, non-decreasing
  std::vector<int> col_indices;  // nnz entries in [0, cols)
  std::vector<double> values;    // nnz entries

  int nnz() const { return int(col_indices.size()); }
  void validate() const;  // throws on broken invariants
};

/// Build canonical CSR (rows sorted by column, duplicates summed) from
/// coordinate triplets.
CsrMatrix csr_from_triplets(int rows, int cols,
                            std::vector<std::pair<std::pair<int, int>, double>> triplets);

Matrix csr_to_dense(const CsrMatrix& a);

/// Relabel rows/columns by `perm` (new index of old i is perm[i]) while
/// preserving the stored order of entries, so that row sums accumulate in
/// the same order as in the source matrix.
CsrMatrix csr_permute_preserving_order(const CsrMatrix& a, const std::vector<int>& perm);

}  // namespace pn
