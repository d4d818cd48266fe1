#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sbm {

using Label = int;
using Labels = std::vector<Label>;

/// Undirected simple graph stored as sorted CSR rows. Immutable once built.
class Adjacency {
 public:
  Adjacency() = default;

  // Accepts each unordered pair at most once in either orientation;
  // self-loops, out-of-range endpoints and duplicates are rejected.
  static Adjacency from_edges(int n, std::span<const std::pair<int, int>> edges);

  int n() const noexcept { return n_; }
  std::int64_t edge_count() const noexcept { return edge_count_; }
  int degree(int i) const { return static_cast<int>(offsets_[i + 1] - offsets_[i]); }

  std::span<const int> neighbors(int i) const {
    return {targets_.data() + offsets_[i], targets_.data() + offsets_[i + 1]};
  }

  // O(log deg) membership test on the sorted row.
  bool has_edge(int i, int j) const;

  // Edges with i < j, in row order.
  std::vector<std::pair<int, int>> edge_list() const;

 private:
  int n_ = 0;
  std::int64_t edge_count_ = 0;
  std::vector<std::int64_t> offsets_{0};
  std::vector<int> targets_;
};

/// Symmetric K x K block connectivity probabilities.
class ConnectivityMatrix {
 public:
  ConnectivityMatrix() = default;
  // Row-major K*K entries; validated for symmetry and range.
  ConnectivityMatrix(int K, std::vector<double> entries);

  static ConnectivityMatrix homogeneous(int K, double p, double q);

  int K() const noexcept { return K_; }
  double operator()(int a, int b) const { return entries_[static_cast<std::size_t>(a) * K_ + b]; }
  const std::vector<double>& entries() const noexcept { return entries_; }

  // True when every diagonal entry equals p, every off-diagonal entry equals q,
  // and p > q.
  bool is_homogeneous() const noexcept { return homogeneous_; }
  double p() const noexcept { return p_; }
  double q() const noexcept { return q_; }

 private:
  int K_ = 0;
  std::vector<double> entries_;
  bool homogeneous_ = false;
  double p_ = 0.0;
  double q_ = 0.0;
};

// Each pair i < j carries an edge independently with probability
// B[truth_i, truth_j]. Pairs are visited in lexicographic order with one
// uniform draw each, so the graph is a pure function of the seed.
Adjacency generate_sbm(int n, const ConnectivityMatrix& B, const Labels& truth, std::uint64_t seed);

// Planted labels with the given community sizes, nodes assigned in blocks.
Labels planted_labels(std::span<const int> sizes);

// Graph file: header "n=<count>", then one "i j" line per edge (0-indexed).
void write_graph(std::ostream& out, const Adjacency& A);
Adjacency read_graph(std::istream& in);
void write_graph_file(const std::string& path, const Adjacency& A);
Adjacency read_graph_file(const std::string& path);

// Labels file: one integer per line.
void write_labels(std::ostream& out, const Labels& labels);
Labels read_labels(std::istream& in);
void write_labels_file(const std::string& path, const Labels& labels);
Labels read_labels_file(const std::string& path);

}  // namespace sbm
