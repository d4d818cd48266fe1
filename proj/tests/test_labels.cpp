#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sbmmh/analysis.hpp"
#include "sbmmh/errors.hpp"
#include "sbmmh/labels.hpp"

using namespace sbm;

namespace {
Adjacency triangle() {
  const std::vector<std::pair<int, int>> e{{0, 1}, {1, 2}, {0, 2}};
  return Adjacency::from_edges(3, e);
}
}  // namespace

TEST_CASE("count statistics on a triangle") {
  const auto s = count_statistics(triangle(), Labels{0, 0, 1}, 2);
  CHECK(s.edges(0, 0) == 1);
  CHECK(s.edges(0, 1) == 2);
  CHECK(s.edges(1, 0) == 2);
  CHECK(s.edges(1, 1) == 0);
  CHECK(s.pairs(0, 0) == 1);
  CHECK(s.pairs(0, 1) == 2);
  CHECK(s.pairs(1, 1) == 0);
  CHECK(s.sizes == std::vector<std::int64_t>{2, 1});
}

TEST_CASE("single block and empty graph") {
  std::mt19937_64 rng(1);
  const auto d = oracle::random_dense(20, 0.3, rng);
  const auto A = d.adjacency();
  const auto s = count_statistics(A, Labels(20, 0), 1);
  CHECK(s.edges(0, 0) == A.edge_count());
  CHECK(s.pairs(0, 0) == 190);
  const auto E = Adjacency::from_edges(10, std::vector<std::pair<int, int>>{});
  const auto t = count_statistics(E, oracle::random_labels(10, 3, rng), 3);
  for (auto o : t.block_edges) CHECK(o == 0);
}

TEST_CASE("count statistics match a double-loop oracle on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 50);
    const int K = 1 + static_cast<int>(rng() % 5);
    const auto d = oracle::random_dense(n, 0.05 + 0.5 * (trial % 7) / 7.0, rng);
    const auto z = oracle::random_labels(n, K, rng);
    const auto A = d.adjacency();
    const auto s = count_statistics(A, z, K);
    const auto c = oracle::naive_counts(d, z, K);
    REQUIRE(s.sizes == c.sizes);
    REQUIRE(s.block_edges == c.O);
    REQUIRE(s.block_pairs == c.N);
    std::int64_t total = 0, size_sum = 0;
    for (int a = 0; a < K; ++a) {
      size_sum += s.sizes[a];
      for (int b = a; b < K; ++b) total += s.edges(a, b);
    }
    CHECK(total == A.edge_count());
    CHECK(size_sum == n);
  }
}

TEST_CASE("label validation") {
  CHECK_THROWS_AS(count_statistics(triangle(), Labels{0, 0, 2}, 2), ConfigError);
  CHECK_THROWS_AS(count_statistics(triangle(), Labels{0, 0}, 2), ConfigError);
  CHECK_THROWS_AS(validate_labels(Labels{0, -1}, 2, 2), ConfigError);
}

TEST_CASE("feasible set interval") {
  auto z_of = [](int a, int b) {
    Labels z(static_cast<std::size_t>(a), 0);
    z.insert(z.end(), static_cast<std::size_t>(b), 1);
    return z;
  };
  CHECK(in_feasible_set(z_of(5, 5), 2, 2.0));
  CHECK(in_feasible_set(z_of(3, 7), 2, 2.0));   // bounds [2.5, 10]
  CHECK_FALSE(in_feasible_set(z_of(2, 8), 2, 2.0));
  const auto b = FeasibleBounds::make(10, 2, 2.0);
  CHECK(b.lower == 3);
  CHECK(b.upper == 10);
  // Bounds that land on integers are inclusive.
  const auto e = FeasibleBounds::make(12, 2, 2.0);  // [3, 12]
  CHECK(e.lower == 3);
  CHECK(e.upper == 12);
}

TEST_CASE("truth with balance below alpha is feasible") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 4);
    const int n = K + static_cast<int>(rng() % 60);
    auto z = oracle::random_labels(n, K, rng);
    const double beta = balance_of(z, K);
    if (!std::isfinite(beta)) continue;
    const double alpha = beta * (1.0 + 1e-3 + 0.5 * (rng() % 100) / 100.0);
    CHECK(in_feasible_set(z, K, alpha));
    CHECK(oracle::feasible(z, K, alpha));
  }
}

TEST_CASE("discrepancy matrix") {
  const Labels zs{0, 0, 1, 1};
  const auto id = discrepancy(zs, zs, 2);
  CHECK(id.off_diagonal_sum() == 0);
  CHECK(id(0, 0) == 2);
  CHECK(id(1, 1) == 2);
  const auto sw = discrepancy(Labels{1, 1, 0, 0}, zs, 2);
  CHECK(sw.off_diagonal_sum() == 0);
  CHECK(sw(0, 0) == 2);
  CHECK(discrepancy(Labels{0, 1, 1, 1}, zs, 2).off_diagonal_sum() == 1);
  Labels big(12);
  for (int i = 0; i < 12; ++i) big[i] = i % 11;
  CHECK_THROWS_AS(discrepancy(big, big, 11), GuardExceeded);
}

TEST_CASE("discrepancy sums, column sums and agreement with the loss") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 3);
    const int n = 1 + static_cast<int>(rng() % 12);
    const auto z = oracle::random_labels(n, K, rng);
    const auto zs = oracle::random_labels(n, K, rng);
    const auto R = discrepancy(z, zs, K);
    std::int64_t total = 0;
    const auto true_sizes = community_sizes(zs, K);
    for (int b = 0; b < K; ++b) {
      std::int64_t col = 0;
      for (int a = 0; a < K; ++a) col += R(a, b);
      CHECK(col == true_sizes[b]);
      total += col;
    }
    CHECK(total == n);
    CHECK(R.off_diagonal_sum() == oracle::brute_hamming(z, zs, K));
    CHECK(static_cast<double>(R.off_diagonal_sum()) == doctest::Approx(n * loss(z, zs, K)));
  }
}

TEST_CASE("canonicalization picks one representative per clustering") {
  CHECK(canonicalize(Labels{2, 2, 0, 1, 0}) == Labels{0, 0, 1, 2, 1});
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = oracle::random_labels(9, 3, rng);
    const auto c = canonicalize(z);
    CHECK(canonicalize(c) == c);
    std::vector<int> perm{0, 1, 2};
    std::shuffle(perm.begin(), perm.end(), rng);
    Labels pz = z;
    for (auto& v : pz) v = perm[v];
    CHECK(canonicalize(pz) == c);
  }
}

TEST_CASE("permutation enumeration visits K! orderings") {
  int count = 0;
  for_each_permutation(4, [&](const std::vector<int>&) { ++count; });
  CHECK(count == 24);
}
