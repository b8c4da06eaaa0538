#include "pn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pn {

int Graph::undirected_edge_count() const {
  int loops = 0;
  for (int i = 0; i < n; ++i)
    for (int e = row_offsets[i]; e < row_offsets[i + 1]; ++e)
      if (col_indices[e] == i) ++loops;
  return (directed_edge_count() - loops) / 2 + loops;
}

bool Graph::has_edge(int u, int v) const {
  const auto begin = col_indices.begin() + row_offsets[std::size_t(u)];
  const auto end = col_indices.begin() + row_offsets[std::size_t(u) + 1];
  return std::binary_search(begin, end, v);
}

Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::pair<int, int>> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw std::invalid_argument("graph_from_edges: endpoint out of range: (" +
                                  std::to_string(u) + "," + std::to_string(v) + ")");
    if (u == v)
      throw std::invalid_argument("graph_from_edges: self loop at node " + std::to_string(u));
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  Graph g;
  g.n = n;
  g.row_offsets.assign(std::size_t(n) + 1, 0);
  g.col_indices.reserve(directed.size());
  for (auto [u, v] : directed) {
    g.col_indices.push_back(v);
    g.row_offsets[std::size_t(u) + 1]++;
  }
  for (int i = 0; i < n; ++i) g.row_offsets[std::size_t(i) + 1] += g.row_offsets[i];
  return g;
}

Graph with_self_loops(const Graph& g) {
  if (g.self_loops) return g;
  Graph out;
  out.n = g.n;
  out.self_loops = true;
  out.row_offsets.assign(std::size_t(g.n) + 1, 0);
  out.col_indices.reserve(g.col_indices.size() + g.n);
  for (int i = 0; i < g.n; ++i) {
    bool placed = false;
    for (int e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
      const int j = g.col_indices[e];
      if (!placed && j > i) {
        out.col_indices.push_back(i);
        placed = true;
      }
      out.col_indices.push_back(j);
    }
    if (!placed) out.col_indices.push_back(i);
    out.row_offsets[std::size_t(i) + 1] = int(out.col_indices.size());
  }
  return out;
}

std::vector<std::pair<int, int>> undirected_edges(const Graph& g) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < g.n; ++i)
    for (int e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e)
      if (g.col_indices[e] >= i) out.emplace_back(i, g.col_indices[e]);
  return out;
}

void Dataset::validate() const {
  const int n = graph.n;
  if (features.rows() != n)
    throw std::invalid_argument("dataset: feature rows " + std::to_string(features.rows()) +
                                " != node count " + std::to_string(n));
  if (int(labels.size()) != n || int(splits.size()) != n)
    throw std::invalid_argument("dataset: labels/splits length mismatch");
  for (int i = 0; i < n; ++i) {
    if (labels[i] < -1 || labels[i] >= num_classes)
      throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) +
                                  " out of range at node " + std::to_string(i));
    if (splits[i] != Split::none && labels[i] < 0)
      throw std::invalid_argument("dataset: split-marked node " + std::to_string(i) +
                                  " has no label");
  }
}

std::vector<int> Dataset::split_indices(Split s) const {
  std::vector<int> idx;
  for (int i = 0; i < graph.n; ++i)
    if (splits[i] == s) idx.push_back(i);
  return idx;
}

bool structurally_equal(const Dataset& a, const Dataset& b) {
  if (a.graph.n != b.graph.n || a.num_classes != b.num_classes) return false;
  if (a.graph.row_offsets != b.graph.row_offsets || a.graph.col_indices != b.graph.col_indices)
    return false;
  if (a.labels != b.labels || a.splits != b.splits) return false;
  if (!a.features.same_shape(b.features)) return false;
  for (std::size_t i = 0; i < a.features.size(); ++i)
    if (a.features.data()[i] != b.features.data()[i]) return false;
  return true;
}

// --- PGRF ---

namespace {

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  throw std::runtime_error("pgrf: line " + std::to_string(line) + ": " + msg);
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset parse_dataset_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) parse_fail(lineno + 1, "unexpected end of file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "pgrf 1") parse_fail(lineno, "expected header 'pgrf 1'");

  int n = 0, m = 0, d = 0, c = 0;
  {
    std::istringstream hs(next_line());
    std::string extra;
    if (!(hs >> n >> m >> d >> c) || (hs >> extra))
      parse_fail(lineno, "expected 'n m d c'");
    if (n <= 0 || m < 0 || d <= 0 || c <= 0) parse_fail(lineno, "counts must be positive");
  }

  std::vector<std::pair<int, int>> edges;
  edges.reserve(std::size_t(m));
  for (int e = 0; e < m; ++e) {
    std::istringstream es(next_line());
    int u = 0, v = 0;
    std::string extra;
    if (!(es >> u >> v) || (es >> extra)) parse_fail(lineno, "expected edge 'u v'");
    if (u < 0 || u >= n || v < 0 || v >= n)
      parse_fail(lineno, "edge endpoint out of range for n=" + std::to_string(n));
    if (u == v) parse_fail(lineno, "self loop not allowed");
    edges.emplace_back(u, v);
  }

  Dataset ds;
  ds.graph = graph_from_edges(n, edges);
  ds.num_classes = c;
  ds.features = Matrix(n, d);
  for (int i = 0; i < n; ++i) {
    std::istringstream fs(next_line());
    for (int j = 0; j < d; ++j)
      if (!(fs >> ds.features(i, j))) parse_fail(lineno, "expected " + std::to_string(d) + " reals");
    std::string extra;
    if (fs >> extra) parse_fail(lineno, "trailing tokens after features");
  }
  ds.labels.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    std::istringstream ls(next_line());
    std::string extra;
    if (!(ls >> ds.labels[std::size_t(i)]) || (ls >> extra))
      parse_fail(lineno, "expected one integer label");
    if (ds.labels[std::size_t(i)] < -1 || ds.labels[std::size_t(i)] >= c)
      parse_fail(lineno, "label out of range [-1," + std::to_string(c) + ")");
  }
  ds.splits.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const std::string s = next_line();
    if (s == "t")
      ds.splits[std::size_t(i)] = Split::train;
    else if (s == "v")
      ds.splits[std::size_t(i)] = Split::valid;
    else if (s == "s")
      ds.splits[std::size_t(i)] = Split::test;
    else if (s == "-")
      ds.splits[std::size_t(i)] = Split::none;
    else
      parse_fail(lineno, "expected split mark 't', 'v', 's' or '-'");
  }
  ds.validate();
  return ds;
}

std::string write_dataset_text(const Dataset& d) {
  d.validate();
  std::ostringstream out;
  const auto edges = undirected_edges(d.graph);
  out << "pgrf 1\n";
  out << d.graph.n << ' ' << edges.size() << ' ' << d.features.cols() << ' ' << d.num_classes
      << '\n';
  for (auto [u, v] : edges) out << u << ' ' << v << '\n';
  for (int i = 0; i < d.graph.n; ++i) {
    for (int j = 0; j < d.features.cols(); ++j) {
      if (j) out << ' ';
      out << format_real(d.features(i, j));
    }
    out << '\n';
  }
  for (int i = 0; i < d.graph.n; ++i) out << d.labels[std::size_t(i)] << '\n';
  for (int i = 0; i < d.graph.n; ++i) {
    switch (d.splits[std::size_t(i)]) {
      case Split::train: out << "t\n"; break;
      case Split::valid: out << "v\n"; break;
      case Split::test: out << "s\n"; break;
      case Split::none: out << "-\n"; break;
    }
  }
  return out.str();
}

Dataset parse_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgrf: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_dataset_text(ss.str());
}

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgrf: cannot open " + path + " for writing");
  f << write_dataset_text(d);
  if (!f) throw std::runtime_error("pgrf: write to " + path + " failed");
}

// --- generators ---

Graph gen_er(int n, double p, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("gen_er: n must be >= 0");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("gen_er: p must lie in [0,1]");
  std::vector<std::pair<int, int>> edges;
  const std::int64_t total = std::int64_t(n) * (n - 1) / 2;
  auto pair_at = [n](std::int64_t t) {
    // invert the row-major enumeration of pairs (i < j)
    int i = 0;
    std::int64_t remaining = n - 1;
    while (t >= remaining) {
      t -= remaining;
      ++i;
      remaining = n - 1 - i;
    }
    return std::make_pair(i, i + 1 + int(t));
  };
  if (p >= 1.0) {
    for (std::int64_t t = 0; t < total; ++t) edges.push_back(pair_at(t));
  } else if (p > 0.0) {
    // geometric skips between successes; O(m) instead of O(n^2)
    Rng rng(seed);
    const double log1mp = std::log1p(-p);
    std::int64_t t = -1;
    while (true) {
      double u;
      do {
        u = rng.uniform();
      } while (u >= 1.0);
      t += 1 + std::int64_t(std::floor(std::log1p(-u) / log1mp));
      if (t >= total || t < 0) break;
      edges.push_back(pair_at(t));
    }
  }
  return graph_from_edges(n, edges);
}

Dataset gen_sbm(int n, int classes, double p_in, double p_out, int d, double noise,
                std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("gen_sbm: classes must be >= 2");
  if (d < classes) throw std::invalid_argument("gen_sbm: feature dim must be >= classes");
  if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
    throw std::invalid_argument("gen_sbm: probabilities must lie in [0,1]");
  if (n < classes) throw std::invalid_argument("gen_sbm: n must be >= classes");

  Dataset ds;
  ds.num_classes = classes;
  ds.labels.resize(std::size_t(n));
  // balanced planted partition: contiguous blocks, remainder spread left
  const int base = n / classes, rem = n % classes;
  int node = 0;
  for (int k = 0; k < classes; ++k) {
    const int sz = base + (k < rem ? 1 : 0);
    for (int i = 0; i < sz; ++i) ds.labels[std::size_t(node++)] = k;
  }

  Rng edge_rng = Rng(seed).fork(1);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double p = ds.labels[std::size_t(i)] == ds.labels[std::size_t(j)] ? p_in : p_out;
      if (edge_rng.uniform() < p) edges.emplace_back(i, j);
    }
  ds.graph = graph_from_edges(n, edges);

  Rng feat_rng = Rng(seed).fork(2);
  ds.features = Matrix(n, d);
  for (int i = 0; i < n; ++i) {
    ds.features(i, ds.labels[std::size_t(i)]) = 1.0;
    for (int j = 0; j < d; ++j) ds.features(i, j) += noise * feat_rng.normal();
  }

  // 60/20/20 split
  Rng split_rng = Rng(seed).fork(3);
  std::vector<int> order = split_rng.permutation(n);
  ds.splits.assign(std::size_t(n), Split::none);
  const int n_train = int(std::llround(n * 0.6));
  const int n_valid = int(std::llround(n * 0.2));
  for (int i = 0; i < n; ++i) {
    Split s = Split::test;
    if (i < n_train)
      s = Split::train;
    else if (i < n_train + n_valid)
      s = Split::valid;
    ds.splits[std::size_t(order[std::size_t(i)])] = s;
  }
  ds.validate();
  return ds;
}

Graph gen_csl(int n, int skip) {
  if (n < 4) throw std::invalid_argument("gen_csl: n must be >= 4");
  if (skip < 2 || skip > n - 2)
    throw std::invalid_argument("gen_csl: skip must lie in [2, n-2]; skip=1 duplicates the cycle");
  if (n % 2 == 0 && skip == n / 2)
    throw std::invalid_argument("gen_csl: skip = n/2 maps chords onto themselves");
  // gcd(n, skip) > 1 splits the chords into several cycles; the graph stays
  // 4-regular either way, so no restriction is needed.
  std::vector<std::pair<int, int>> edges;
  edges.reserve(std::size_t(n) * 2);
  for (int i = 0; i < n; ++i) {
    edges.emplace_back(i, (i + 1) % n);
    edges.emplace_back(i, (i + skip) % n);
  }
  return graph_from_edges(n, edges);
}

double edge_homophily(const Dataset& d) {
  const auto edges = undirected_edges(d.graph);
  if (edges.empty()) throw std::invalid_argument("edge_homophily: graph has no edges");
  std::int64_t same = 0;
  for (auto [u, v] : edges) {
    if (d.labels[std::size_t(u)] < 0 || d.labels[std::size_t(v)] < 0)
      throw std::invalid_argument("edge_homophily: unlabeled endpoint at edge (" +
                                  std::to_string(u) + "," + std::to_string(v) + ")");
    if (d.labels[std::size_t(u)] == d.labels[std::size_t(v)]) ++same;
  }
  return double(same) / double(edges.size());
}

double class_adjusted_homophily(const Dataset& d) {
  const int c = d.num_classes;
  std::vector<double> same_deg(std::size_t(c), 0.0), total_deg(std::size_t(c), 0.0);
  std::vector<double> class_size(std::size_t(c), 0.0);
  for (int i = 0; i < d.graph.n; ++i) {
    const int yi = d.labels[std::size_t(i)];
    if (yi < 0) throw std::invalid_argument("class_adjusted_homophily: unlabeled node");
    class_size[std::size_t(yi)] += 1.0;
    for (int e = d.graph.row_offsets[i]; e < d.graph.row_offsets[i + 1]; ++e) {
      const int yj = d.labels[std::size_t(d.graph.col_indices[e])];
      total_deg[std::size_t(yi)] += 1.0;
      if (yi == yj) same_deg[std::size_t(yi)] += 1.0;
    }
  }
  double acc = 0.0;
  for (int k = 0; k < c; ++k) {
    if (total_deg[std::size_t(k)] == 0.0) continue;
    const double hk = same_deg[std::size_t(k)] / total_deg[std::size_t(k)];
    acc += std::max(0.0, hk - class_size[std::size_t(k)] / double(d.graph.n));
  }
  return acc / double(c - 1);
}

Dataset permute_dataset(const Dataset& d, const std::vector<int>& perm) {
  const int n = d.graph.n;
  if (int(perm.size()) != n) throw std::invalid_argument("permute_dataset: wrong perm length");
  std::vector<char> seen(std::size_t(n), 0);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[std::size_t(p)])
      throw std::invalid_argument("permute_dataset: perm is not a bijection on [0,n)");
    seen[std::size_t(p)] = 1;
  }
  Dataset out;
  out.num_classes = d.num_classes;
  std::vector<std::pair<int, int>> edges;
  for (auto [u, v] : undirected_edges(d.graph))
    edges.emplace_back(perm[std::size_t(u)], perm[std::size_t(v)]);
  out.graph = graph_from_edges(n, edges);
  out.features = Matrix(n, d.features.cols());
  out.labels.resize(std::size_t(n));
  out.splits.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const int pi = perm[std::size_t(i)];
    for (int j = 0; j < d.features.cols(); ++j) out.features(pi, j) = d.features(i, j);
    out.labels[std::size_t(pi)] = d.labels[std::size_t(i)];
    out.splits[std::size_t(pi)] = d.splits[std::size_t(i)];
  }
  return out;
}

Partitioning random_partition(int n, int parts, std::uint64_t seed) {
  if (parts < 1 || parts > n)
    throw std::invalid_argument("random_partition: parts must lie in [1, n]");
  Rng rng(seed);
  std::vector<int> order = rng.permutation(n);
  Partitioning p;
  p.parts = parts;
  p.part_of.resize(std::size_t(n));
  // deal shuffled nodes into parts round-robin: sizes differ by at most one
  for (int i = 0; i < n; ++i) p.part_of[std::size_t(order[std::size_t(i)])] = i % parts;
  return p;
}

}  // namespace pn
