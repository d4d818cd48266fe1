#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "sbmmh/rng.hpp"

using sbm::Rng;

TEST_CASE("generator matches a direct transcription of the xoshiro256** recurrence") {
  // Reference generator, straight from the algorithm description.
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  std::uint64_t s[4];
  std::uint64_t sm = 42;
  for (auto& w : s) w = sbm::splitmix64(sm);
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t expect = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    REQUIRE(rng() == expect);
  }
}

TEST_CASE("same seed gives the same stream, different seeds differ") {
  Rng a(7), b(7), c(8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c();
    CHECK(x == y);
    differs = differs || x != z;
  }
  CHECK(differs);
}

TEST_CASE("uniform draws lie in [0,1) with mean near one half") {
  Rng rng(3);
  double sum = 0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // sd of the mean is sqrt(1/12/N)
  CHECK(std::abs(sum / N - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / N));
}

TEST_CASE("below(bound) is in range and close to uniform") {
  Rng rng(11);
  for (std::uint64_t bound : {1ULL, 2ULL, 3ULL, 7ULL, 10ULL}) {
    std::vector<int> hist(bound, 0);
    const int N = 70000;
    for (int i = 0; i < N; ++i) {
      const auto v = rng.below(bound);
      REQUIRE(v < bound);
      ++hist[v];
    }
    // Pearson chi-square with bound-1 dof; 40 is far in the tail for dof <= 9.
    double chi = 0;
    const double e = static_cast<double>(N) / bound;
    for (int h : hist) chi += (h - e) * (h - e) / e;
    CHECK(chi < 40.0);
  }
}

TEST_CASE("derived seeds are distinct across indices and bases") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 20; ++base)
    for (std::uint64_t i = 0; i < 200; ++i) seen.insert(sbm::derive_seed(base, i));
  CHECK(seen.size() == 20 * 200);
}
