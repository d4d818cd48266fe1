#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sbmmh/graph.hpp"

namespace sbm {

// Largest K for which permutation searches are run exhaustively.
inline constexpr int kPermutationGuard = 10;

/// Label vector plus the count statistics the posterior consumes:
/// community sizes n_a, block edge counts O_ab and block pair counts n_ab.
/// Block matrices are K x K row-major and symmetric; O_aa counts each
/// within-community edge once.
struct LabelAssignment {
  int K = 0;
  Labels labels;
  std::vector<std::int64_t> sizes;
  std::vector<std::int64_t> block_edges;
  std::vector<std::int64_t> block_pairs;

  int n() const noexcept { return static_cast<int>(labels.size()); }
  std::int64_t edges(int a, int b) const { return block_edges[static_cast<std::size_t>(a) * K + b]; }
  std::int64_t pairs(int a, int b) const { return block_pairs[static_cast<std::size_t>(a) * K + b]; }

  // Recomputes block_pairs from sizes.
  void refresh_pairs();
};

inline std::int64_t within_pairs(std::int64_t s) noexcept { return s * (s - 1) / 2; }

// Throws ConfigError when the length differs from n or a label leaves [0,K).
void validate_labels(const Labels& z, int n, int K);

// Single pass over the edge list.
LabelAssignment count_statistics(const Adjacency& A, const Labels& z, int K);

/// Community-size window [lower, upper] of the feasible set
/// S_alpha = { Z : n/(alpha K) <= n_k(Z) <= alpha n / K for all k }.
struct FeasibleBounds {
  std::int64_t lower = 0;
  std::int64_t upper = 0;

  static FeasibleBounds make(int n, int K, double alpha);
  bool contains(std::int64_t size) const noexcept { return size >= lower && size <= upper; }
};

bool in_feasible_set(const Labels& z, int K, double alpha);
bool in_feasible_set(std::span<const std::int64_t> sizes, const FeasibleBounds& bounds);

std::vector<std::int64_t> community_sizes(const Labels& z, int K);

/// Confusion counts R(a, b) = #{i : Z_i = a, Z*_i = b}, rows permuted so the
/// off-diagonal mass is minimal. permutation[r] is the original row placed
/// at position r.
struct DiscrepancyMatrix {
  int K = 0;
  std::vector<std::int64_t> entries;
  std::vector<int> permutation;

  std::int64_t operator()(int a, int b) const { return entries[static_cast<std::size_t>(a) * K + b]; }
  std::int64_t off_diagonal_sum() const;
};

DiscrepancyMatrix discrepancy(const Labels& z, const Labels& z_star, int K);

// Raw (unpermuted) confusion counts, row = z label, column = z_star label.
std::vector<std::int64_t> confusion(const Labels& z, const Labels& z_star, int K);

// Maximum over row permutations sigma of sum_a R(sigma(a), a), by exhaustive
// search. Throws GuardExceeded for K above kPermutationGuard.
std::int64_t best_matching(std::span<const std::int64_t> R, int K, std::vector<int>* argmax = nullptr);

// Relabels communities by order of first appearance: a unique representative
// of the clustering {sigma o z}.
Labels canonicalize(const Labels& z);

// Calls f on every permutation of [0, K) in lexicographic order.
void for_each_permutation(int K, const std::function<void(const std::vector<int>&)>& f);

}  // namespace sbm
