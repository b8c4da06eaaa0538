#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pn/matrix.hpp"
#include "pn/sparse.hpp"

namespace pn {

enum class Split : unsigned char { none = 0, train, valid, test };

/// Undirected graph in CSR form; both directions of every edge are stored.
/// Self loops are only present when `self_loops` is set, and then exactly
/// one per node.
struct Graph {
  int n = 0;
  std::vector<int> row_offsets;  // n + 1
  std::vector<int> col_indices;  // per-row sorted, deduplicated
  bool self_loops = false;

  int degree(int i) const { return row_offsets[std::size_t(i) + 1] - row_offsets[std::size_t(i)]; }
  int directed_edge_count() const { return int(col_indices.size()); }
  /// Number of undirected edges, self loops counted once.
  int undirected_edge_count() const;
  bool has_edge(int u, int v) const;
};

Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges);
Graph with_self_loops(const Graph& g);
/// Unique undirected pairs (u <= v), sorted.
std::vector<std::pair<int, int>> undirected_edges(const Graph& g);

struct Dataset {
  Graph graph;
  Matrix features;          // n x d
  std::vector<int> labels;  // -1 = unlabeled
  std::vector<Split> splits;
  int num_classes = 0;

  void validate() const;
  std::vector<int> split_indices(Split s) const;
};

bool structurally_equal(const Dataset& a, const Dataset& b);

// PGRF text format round trip. Parse errors carry the 1-based line number.
Dataset parse_dataset(const std::string& path);
void write_dataset(const Dataset& d, const std::string& path);
Dataset parse_dataset_text(const std::string& text);    // for tests
std::string write_dataset_text(const Dataset& d);

// Synthetic generators; pure in (arguments, seed).
Graph gen_er(int n, double p, std::uint64_t seed);
Dataset gen_sbm(int n, int classes, double p_in, double p_out, int d, double noise,
                std::uint64_t seed);
Graph gen_csl(int n, int skip);

/// Fraction of undirected edges whose endpoints carry the same label.
/// Requires every edge endpoint to be labeled.
double edge_homophily(const Dataset& d);
/// Class-size-adjusted homophily (the metric used for published dataset
/// tables); reported as a secondary statistic only.
double class_adjusted_homophily(const Dataset& d);

Dataset permute_dataset(const Dataset& d, const std::vector<int>& perm);

struct Partitioning {
  std::vector<int> part_of;  // node -> part id
  int parts = 0;
};

/// Uniform random node partition with sizes differing by at most one.
Partitioning random_partition(int n, int parts, std::uint64_t seed);

// Spectral probe.
struct EighResult {
  std::vector<double> eigenvalues;  // ascending
  Matrix eigenvectors;              // column k pairs with eigenvalue k
};

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
EighResult jacobi_eigh(Matrix a);

struct FiedlerResult {
  Matrix vector;       // n x 1, unit norm, first nonzero entry positive
  double eigenvalue;   // second smallest of the normalized Laplacian
};

/// Eigenvector for the second-smallest eigenvalue of I - D^{-1/2} A D^{-1/2}.
/// Isolated nodes get their degree clamped to one. The returned vector is
/// orthogonalized against D^{1/2} 1 so it stays meaningful when the zero
/// eigenvalue is degenerate (disconnected graphs). Enforces n <= 5000.
FiedlerResult fiedler_vector(const Graph& g);

Matrix normalized_laplacian(const Graph& g);

}  // namespace pn
