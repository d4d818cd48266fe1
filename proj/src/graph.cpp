#include "sbmmh/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sbmmh/errors.hpp"
#include "sbmmh/rng.hpp"

namespace sbm {

Adjacency Adjacency::from_edges(int n, std::span<const std::pair<int, int>> edges) {
  if (n < 0) throw ConfigError("node count must be nonnegative");
  Adjacency A;
  A.n_ = n;
  std::vector<std::int64_t> deg(static_cast<std::size_t>(n), 0);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw ConfigError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
    if (i == j) throw ConfigError("self-loop at node " + std::to_string(i));
    ++deg[i];
    ++deg[j];
  }
  A.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) A.offsets_[i + 1] = A.offsets_[i] + deg[i];
  A.targets_.resize(static_cast<std::size_t>(A.offsets_[n]));
  std::vector<std::int64_t> fill(A.offsets_.begin(), A.offsets_.end() - 1);
  for (const auto& [i, j] : edges) {
    A.targets_[fill[i]++] = j;
    A.targets_[fill[j]++] = i;
  }
  for (int i = 0; i < n; ++i) {
    auto first = A.targets_.begin() + A.offsets_[i];
    auto last = A.targets_.begin() + A.offsets_[i + 1];
    std::sort(first, last);
    if (std::adjacent_find(first, last) != last)
      throw ConfigError("duplicate edge at node " + std::to_string(i));
  }
  A.edge_count_ = static_cast<std::int64_t>(edges.size());
  return A;
}

bool Adjacency::has_edge(int i, int j) const {
  const auto row = neighbors(i);
  return std::binary_search(row.begin(), row.end(), j);
}

std::vector<std::pair<int, int>> Adjacency::edge_list() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(edge_count_));
  for (int i = 0; i < n_; ++i)
    for (int j : neighbors(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

ConnectivityMatrix::ConnectivityMatrix(int K, std::vector<double> entries)
    : K_(K), entries_(std::move(entries)) {
  if (K < 1) throw ConfigError("connectivity matrix needs K >= 1");
  if (entries_.size() != static_cast<std::size_t>(K) * K)
    throw ConfigError("connectivity matrix must have K*K entries");
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      const double v = (*this)(a, b);
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("connectivity entries must lie in [0,1]");
      if (v != (*this)(b, a)) throw ConfigError("connectivity matrix must be symmetric");
    }
  }
  p_ = (*this)(0, 0);
  q_ = K > 1 ? (*this)(0, 1) : 0.0;
  bool same = true;
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b)
      same = same && (*this)(a, b) == (a == b ? p_ : q_);
  homogeneous_ = same && K > 1 && p_ > q_;
}

ConnectivityMatrix ConnectivityMatrix::homogeneous(int K, double p, double q) {
  std::vector<double> e(static_cast<std::size_t>(K) * K, q);
  for (int a = 0; a < K; ++a) e[static_cast<std::size_t>(a) * K + a] = p;
  return ConnectivityMatrix(K, std::move(e));
}

Adjacency generate_sbm(int n, const ConnectivityMatrix& B, const Labels& truth, std::uint64_t seed) {
  if (static_cast<int>(truth.size()) != n) throw ConfigError("truth length differs from n");
  const int K = B.K();
  for (Label z : truth)
    if (z < 0 || z >= K) throw ConfigError("truth label " + std::to_string(z) + " outside [0,K)");
  Rng rng(seed);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < B(truth[i], truth[j])) edges.emplace_back(i, j);
    }
  }
  return Adjacency::from_edges(n, edges);
}

Labels planted_labels(std::span<const int> sizes) {
  Labels z;
  for (std::size_t a = 0; a < sizes.size(); ++a) {
    if (sizes[a] < 0) throw ConfigError("community sizes must be nonnegative");
    z.insert(z.end(), static_cast<std::size_t>(sizes[a]), static_cast<Label>(a));
  }
  return z;
}

void write_graph(std::ostream& out, const Adjacency& A) {
  out << "n=" << A.n() << '\n';
  for (const auto& [i, j] : A.edge_list()) out << i << ' ' << j << '\n';
}

Adjacency read_graph(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("n=", 0) != 0)
    throw ConfigError("graph file must start with a header line n=<count>");
  int n = 0;
  try {
    n = std::stoi(line.substr(2));
  } catch (const std::exception&) {
    throw ConfigError("malformed graph header: " + line);
  }
  std::vector<std::pair<int, int>> edges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int i = 0, j = 0;
    if (!(ls >> i >> j)) throw ConfigError("malformed edge on line " + std::to_string(lineno));
    edges.emplace_back(i, j);
  }
  return Adjacency::from_edges(n, edges);
}

void write_labels(std::ostream& out, const Labels& labels) {
  for (Label z : labels) out << z << '\n';
}

Labels read_labels(std::istream& in) {
  Labels z;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      z.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw ConfigError("malformed label on line " + std::to_string(lineno));
    }
  }
  return z;
}

namespace {
std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  return f;
}
std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  return f;
}
}  // namespace

void write_graph_file(const std::string& path, const Adjacency& A) {
  auto f = open_out(path);
  write_graph(f, A);
}
Adjacency read_graph_file(const std::string& path) {
  auto f = open_in(path);
  return read_graph(f);
}
void write_labels_file(const std::string& path, const Labels& labels) {
  auto f = open_out(path);
  write_labels(f, labels);
}
Labels read_labels_file(const std::string& path) {
  auto f = open_in(path);
  return read_labels(f);
}

}  // namespace sbm
