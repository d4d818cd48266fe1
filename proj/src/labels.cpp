#include "sbmmh/labels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sbmmh/errors.hpp"

namespace sbm {

void LabelAssignment::refresh_pairs() {
  block_pairs.assign(static_cast<std::size_t>(K) * K, 0);
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      block_pairs[static_cast<std::size_t>(a) * K + b] =
          a == b ? within_pairs(sizes[a]) : sizes[a] * sizes[b];
    }
  }
}

void validate_labels(const Labels& z, int n, int K) {
  if (K < 1) throw ConfigError("K must be at least 1");
  if (static_cast<int>(z.size()) != n)
    throw ConfigError("label vector has length " + std::to_string(z.size()) + ", expected " +
                      std::to_string(n));
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] < 0 || z[i] >= K)
      throw ConfigError("label " + std::to_string(z[i]) + " at node " + std::to_string(i) +
                        " outside [0," + std::to_string(K) + ")");
  }
}

std::vector<std::int64_t> community_sizes(const Labels& z, int K) {
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(K), 0);
  for (Label a : z) ++sizes[a];
  return sizes;
}

LabelAssignment count_statistics(const Adjacency& A, const Labels& z, int K) {
  validate_labels(z, A.n(), K);
  LabelAssignment s;
  s.K = K;
  s.labels = z;
  s.sizes = community_sizes(z, K);
  s.block_edges.assign(static_cast<std::size_t>(K) * K, 0);
  for (int i = 0; i < A.n(); ++i) {
    for (int j : A.neighbors(i)) {
      if (j <= i) continue;
      const int a = z[i], b = z[j];
      ++s.block_edges[static_cast<std::size_t>(a) * K + b];
      if (a != b) ++s.block_edges[static_cast<std::size_t>(b) * K + a];
    }
  }
  s.refresh_pairs();
  return s;
}

FeasibleBounds FeasibleBounds::make(int n, int K, double alpha) {
  if (!(alpha >= 1.0)) throw ConfigError("alpha must be at least 1");
  if (K < 1) throw ConfigError("K must be at least 1");
  // Relative slack so that exact boundaries such as n/(alpha K) = 2.5 * (1 +- ulp)
  // land on the intended integer.
  constexpr double kSlack = 1e-12;
  const double lo = static_cast<double>(n) / (alpha * K);
  const double hi = alpha * static_cast<double>(n) / K;
  FeasibleBounds b;
  b.lower = static_cast<std::int64_t>(std::ceil(lo * (1.0 - kSlack)));
  b.upper = static_cast<std::int64_t>(std::floor(hi * (1.0 + kSlack)));
  return b;
}

bool in_feasible_set(std::span<const std::int64_t> sizes, const FeasibleBounds& bounds) {
  return std::all_of(sizes.begin(), sizes.end(), [&](std::int64_t s) { return bounds.contains(s); });
}

bool in_feasible_set(const Labels& z, int K, double alpha) {
  const int n = static_cast<int>(z.size());
  validate_labels(z, n, K);
  const auto sizes = community_sizes(z, K);
  return in_feasible_set(sizes, FeasibleBounds::make(n, K, alpha));
}

std::vector<std::int64_t> confusion(const Labels& z, const Labels& z_star, int K) {
  if (z.size() != z_star.size()) throw ConfigError("label vectors differ in length");
  validate_labels(z, static_cast<int>(z.size()), K);
  validate_labels(z_star, static_cast<int>(z_star.size()), K);
  std::vector<std::int64_t> R(static_cast<std::size_t>(K) * K, 0);
  for (std::size_t i = 0; i < z.size(); ++i) ++R[static_cast<std::size_t>(z[i]) * K + z_star[i]];
  return R;
}

void for_each_permutation(int K, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    f(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

std::int64_t best_matching(std::span<const std::int64_t> R, int K, std::vector<int>* argmax) {
  if (K > kPermutationGuard)
    throw GuardExceeded("permutation search unsupported for K=" + std::to_string(K) +
                        " (guard " + std::to_string(kPermutationGuard) + ")");
  std::int64_t best = -1;
  for_each_permutation(K, [&](const std::vector<int>& perm) {
    std::int64_t diag = 0;
    for (int r = 0; r < K; ++r) diag += R[static_cast<std::size_t>(perm[r]) * K + r];
    if (diag > best) {
      best = diag;
      if (argmax) *argmax = perm;
    }
  });
  return best;
}

std::int64_t DiscrepancyMatrix::off_diagonal_sum() const {
  std::int64_t total = 0;
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b)
      if (a != b) total += (*this)(a, b);
  return total;
}

DiscrepancyMatrix discrepancy(const Labels& z, const Labels& z_star, int K) {
  if (K > kPermutationGuard)
    throw GuardExceeded("discrepancy unsupported for K=" + std::to_string(K));
  const auto R = confusion(z, z_star, K);
  DiscrepancyMatrix d;
  d.K = K;
  best_matching(R, K, &d.permutation);
  d.entries.resize(R.size());
  for (int r = 0; r < K; ++r)
    for (int b = 0; b < K; ++b)
      d.entries[static_cast<std::size_t>(r) * K + b] = R[static_cast<std::size_t>(d.permutation[r]) * K + b];
  return d;
}

Labels canonicalize(const Labels& z) {
  Labels out(z.size());
  std::vector<int> map;
  int next = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const int a = z[i];
    if (a >= static_cast<int>(map.size())) map.resize(static_cast<std::size_t>(a) + 1, -1);
    if (map[a] < 0) map[a] = next++;
    out[i] = map[a];
  }
  return out;
}

}  // namespace sbm
