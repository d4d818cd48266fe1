#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sbmmh/analysis.hpp"
#include "sbmmh/errors.hpp"
#include "sbmmh/init.hpp"
#include "sbmmh/rng.hpp"
#include "sbmmh/sampler.hpp"

using namespace sbm;

namespace {

ModelConfig config(int n, int K, double alpha, double xi = 1.0) {
  ModelConfig c;
  c.n = n;
  c.K = K;
  c.alpha = alpha;
  c.xi = xi;
  return c;
}

}  // namespace

TEST_CASE("zero-delta proposals are always accepted and infeasible ones never") {
  // Empty graph on three nodes with sizes (2,1): moving a node of the larger
  // community gives sizes (1,2), the same block multiset; moving the
  // singleton empties a community, which alpha = 2 forbids.
  const auto A = Adjacency::from_edges(3, std::vector<std::pair<int, int>>{});
  const PosteriorModel model(config(3, 2, 2.0));
  Chain chain(A, model, Labels{0, 0, 1}, 5);
  int feasible = 0, infeasible = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto out = chain.step();
    if (out.proposal.feasible) {
      ++feasible;
      CHECK(std::abs(out.proposal.delta) < 1e-12);
      REQUIRE(out.accepted);
    } else {
      ++infeasible;
      REQUIRE_FALSE(out.accepted);
    }
  }
  CHECK(feasible > 0);
  CHECK(infeasible > 0);
}

TEST_CASE("acceptance frequency of one proposal matches min(1, exp(xi delta))") {
  const int n = 8, K = 2;
  std::mt19937_64 rng(21);
  const auto d = oracle::random_dense(n, 0.5, rng);
  const auto A = d.adjacency();
  const Labels z0{0, 0, 0, 0, 1, 1, 1, 1};
  for (double xi : {1.0, 2.0}) {
    const PosteriorModel model(config(n, K, 3.0, xi));
    // Pick the node whose flip has the most negative delta, so acceptance
    // is strictly between 0 and 1.
    int node = -1;
    double delta = 0;
    for (int j = 0; j < n; ++j) {
      Labels z = z0;
      z[j] = 1 - z[j];
      const double dj = oracle::collapsed_log_posterior(d, z, K, 3.0) - oracle::collapsed_log_posterior(d, z0, K, 3.0);
      if (dj < delta && xi * dj > -3.0) {
        delta = dj;
        node = j;
      }
    }
    REQUIRE(node >= 0);
    const double expect = std::min(1.0, std::exp(xi * delta));
    int trials = 0, accepted = 0;
    for (int s = 0; s < 100000; ++s) {
      Chain chain(A, model, z0, derive_seed(99, s));
      const auto out = chain.step();
      if (out.proposal.node != node) continue;
      ++trials;
      accepted += out.accepted;
    }
    const double freq = static_cast<double>(accepted) / trials;
    const double sigma = std::sqrt(expect * (1 - expect) / trials);
    CHECK(trials > 10000);
    CHECK(std::abs(freq - expect) <= 3.0 * sigma);
  }
}

TEST_CASE("infeasible or mismatched starting states are rejected") {
  const auto A = Adjacency::from_edges(10, std::vector<std::pair<int, int>>{});
  const PosteriorModel model(config(10, 2, 2.0));
  CHECK_THROWS_AS(Chain(A, model, Labels{0, 0, 0, 0, 0, 0, 0, 0, 1, 1}, 1), ConfigError);
  CHECK_THROWS_AS(Chain(A, model, Labels{0, 1}, 1), ConfigError);
  const PosteriorModel other(config(9, 2, 2.0));
  CHECK_THROWS_AS(Chain(A, other, Labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 1), ConfigError);
}

TEST_CASE("zero iterations returns the initial state") {
  std::mt19937_64 rng(2);
  const auto A = oracle::random_dense(30, 0.2, rng).adjacency();
  const auto z0 = oracle::random_feasible_labels(30, 3, 2.0, rng);
  RunOptions opt;
  opt.iterations = 0;
  const auto r = run_chain(A, z0, config(30, 3, 2.0), opt, 1);
  CHECK(r.final_labels == z0);
  REQUIRE(r.trajectory.records.size() == 1);
  CHECK(r.trajectory.records[0].iteration == 0);
  CHECK(r.iterations == 0);
}

TEST_CASE("trajectories are reproducible and well formed") {
  std::mt19937_64 rng(3);
  const int n = 80, K = 3;
  const auto truth = planted_labels(std::vector<int>{30, 25, 25});
  const auto A = generate_sbm(n, ConnectivityMatrix::homogeneous(K, 0.3, 0.08), truth, 4);
  const auto z0 = oracle::random_feasible_labels(n, K, 2.0, rng);
  RunOptions opt;
  opt.iterations = 5000;
  opt.thinning = 37;
  const auto a = run_chain(A, z0, config(n, K, 2.0), opt, 17, &truth);
  const auto b = run_chain(A, z0, config(n, K, 2.0), opt, 17, &truth);
  const auto c = run_chain(A, z0, config(n, K, 2.0), opt, 18, &truth);
  std::ostringstream sa, sb, sc;
  write_trajectory_csv(sa, a.trajectory);
  write_trajectory_csv(sb, b.trajectory);
  write_trajectory_csv(sc, c.trajectory);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() != sc.str());
  CHECK(a.final_labels == b.final_labels);
  CHECK(sa.str().rfind("iteration,log_posterior,loss,accepted\n", 0) == 0);
  const auto& rec = a.trajectory.records;
  CHECK(rec.front().iteration == 0);
  for (std::size_t i = 1; i < rec.size(); ++i) CHECK(rec[i].iteration > rec[i - 1].iteration);
  CHECK(rec.back().iteration == 5000);
  for (const auto& r : rec) REQUIRE(r.loss.has_value());
  // Without truth the loss column is empty.
  const auto u = run_chain(A, z0, config(n, K, 2.0), opt, 17);
  std::ostringstream su;
  write_trajectory_csv(su, u.trajectory);
  std::string line;
  std::istringstream in(su.str());
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line.find(",,") != std::string::npos);
}

TEST_CASE("default thinning records every n steps") {
  std::mt19937_64 rng(4);
  const auto A = oracle::random_dense(25, 0.2, rng).adjacency();
  const auto z0 = oracle::random_feasible_labels(25, 2, 2.0, rng);
  RunOptions opt;
  opt.iterations = 100;
  const auto r = run_chain(A, z0, config(25, 2, 2.0), opt, 1);
  std::vector<std::uint64_t> its;
  for (const auto& x : r.trajectory.records) its.push_back(x.iteration);
  CHECK(its == std::vector<std::uint64_t>{0, 25, 50, 75, 100});
}

TEST_CASE("cached statistics stay exact over long runs") {
  std::mt19937_64 rng(5);
  for (int variant = 0; variant < 2; ++variant) {
    const int n = 150, K = 4;
    const auto A = oracle::random_dense(n, 0.1, rng).adjacency();
    auto c = config(n, K, 3.0, 1.5);
    if (variant) c.connectivity = ConnectivityMatrix::homogeneous(K, 0.2, 0.05);
    const PosteriorModel model(c);
    Chain chain(A, model, oracle::random_feasible_labels(n, K, 3.0, rng), 6);
    for (int t = 0; t < 100000; ++t) {
      chain.step();
      if (t % 10000 == 0) REQUIRE_NOTHROW(chain.verify(1e-8));
    }
    CHECK_NOTHROW(chain.verify(1e-8));
    // The cached value is a sum of cached block terms in a fixed order, so it
    // equals the from-scratch evaluation exactly.
    CHECK(chain.log_posterior() == model.evaluate(count_statistics(A, chain.labels(), K)).value);
    for (int i = 0; i < n; ++i) {
      std::int64_t s = 0;
      for (auto v : chain.comm_degree(i)) s += v;
      REQUIRE(s == A.degree(i));
    }
  }
}

TEST_CASE("lazy steps hold with probability one half") {
  std::mt19937_64 rng(6);
  const auto A = oracle::random_dense(20, 0.3, rng).adjacency();
  const PosteriorModel model(config(20, 2, 2.0));
  Chain chain(A, model, oracle::random_feasible_labels(20, 2, 2.0, rng), 7);
  const int N = 100000;
  int holds = 0;
  for (int t = 0; t < N; ++t) holds += chain.step_lazy().lazy_stay;
  CHECK(chain.iteration() == static_cast<std::uint64_t>(N));
  CHECK(std::abs(holds - N / 2.0) <= 3.0 * std::sqrt(N * 0.25));
}

TEST_CASE("raising xi never accepts a downhill move that a lower xi rejects") {
  std::mt19937_64 rng(7);
  const int n = 40, K = 3;
  const auto A = oracle::random_dense(n, 0.2, rng).adjacency();
  const PosteriorModel cold(config(n, K, 2.0, 3.0)), warm(config(n, K, 2.0, 1.0));
  int downhill_accepts = 0;
  for (int s = 0; s < 20000; ++s) {
    const auto z = oracle::random_feasible_labels(n, K, 2.0, rng);
    Chain a(A, warm, z, derive_seed(5, s)), b(A, cold, z, derive_seed(5, s));
    const auto oa = a.step(), ob = b.step();
    REQUIRE(oa.proposal.node == ob.proposal.node);
    REQUIRE(oa.proposal.to == ob.proposal.to);
    if (ob.proposal.delta < 0 && ob.accepted) {
      ++downhill_accepts;
      REQUIRE(oa.accepted);
    }
  }
  CHECK(downhill_accepts > 0);
}

TEST_CASE("hitting time is zero at the truth and at permuted truth") {
  const auto truth = planted_labels(std::vector<int>{20, 20, 20});
  const auto A = generate_sbm(60, ConnectivityMatrix::homogeneous(3, 0.4, 0.05), truth, 1);
  const PosteriorModel model(config(60, 3, 2.0));
  CHECK(hitting_time(A, model, truth, truth, 1000, 1) == std::optional<std::uint64_t>(0));
  Labels perm = truth;
  for (auto& v : perm) v = (v + 1) % 3;
  CHECK(hitting_time(A, model, perm, truth, 1000, 1) == std::optional<std::uint64_t>(0));
}

TEST_CASE("strong-signal chains hit the truth within 40n steps") {
  // n = 200, K = 2, nI close to 4 log n.
  const int n = 200;
  const double q = 0.05;
  double lo = q, hi = 0.99;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (n * renyi_I(mid, q) < 4 * std::log(n) ? lo : hi) = mid;
  }
  const double p = 0.5 * (lo + hi);
  CHECK(n * renyi_I(p, q) == doctest::Approx(4 * std::log(n)).epsilon(1e-9));
  const auto truth = planted_labels(std::vector<int>{100, 100});
  const PosteriorModel model(config(n, 2, 2.0));
  std::vector<double> hits;
  for (int s = 0; s < 20; ++s) {
    const auto A = generate_sbm(n, ConnectivityMatrix::homogeneous(2, p, q), truth, derive_seed(31, s));
    const auto z0 = spectral_init(A, 2, 2.0, derive_seed(32, s));
    const auto h = hitting_time(A, model, z0, truth, 400ULL * n, derive_seed(33, s));
    hits.push_back(h ? static_cast<double>(*h) : INFINITY);
  }
  std::sort(hits.begin(), hits.end());
  CHECK(0.5 * (hits[9] + hits[10]) <= 40.0 * n);
}

TEST_CASE("balanced desk instance reaches the truth posterior within 40n") {
  const int n = 500, K = 5;
  const auto truth = planted_labels(std::vector<int>(5, 100));
  const auto A = generate_sbm(n, ConnectivityMatrix::homogeneous(K, 0.3, 0.1), truth, 2);
  const PosteriorModel model(config(n, K, 2.0));
  const double truth_lp = model.evaluate(count_statistics(A, truth, K)).value;
  int reached = 0;
  for (int s = 0; s < 20; ++s) {
    const auto z0 = spectral_init(A, K, 2.0, derive_seed(41, s));
    Chain chain(A, model, z0, derive_seed(42, s));
    bool hit = chain.log_posterior() >= truth_lp;
    for (int t = 0; t < 40 * n && !hit; ++t) hit = chain.step().accepted && chain.log_posterior() >= truth_lp;
    reached += hit;
  }
  CHECK(reached >= 18);
}

TEST_CASE("no-signal chain visits size profiles as the exact chain predicts") {
  // p = q: the posterior still prices sizes through the Beta terms, so the
  // size-profile histogram is compared with the exact stationary law.
  const int n = 8, K = 2;
  const auto truth = planted_labels(std::vector<int>{4, 4});
  const auto A = generate_sbm(n, ConnectivityMatrix::homogeneous(K, 0.4, 0.4), truth, 3);
  const auto c = config(n, K, 3.0);
  const auto exact = enumerate_exact_chain(A, c, false, false);
  std::map<int, double> expected;
  for (std::size_t s = 0; s < exact.size(); ++s) {
    const auto sz = community_sizes(exact.states[s], K);
    expected[static_cast<int>(std::min(sz[0], sz[1]))] += exact.stationary[s];
  }
  const PosteriorModel model(c);
  Chain chain(A, model, truth, 4);
  std::map<int, double> seen;
  const int N = 400000;
  for (int t = 0; t < 5000; ++t) chain.step();
  for (int t = 0; t < N; ++t) {
    chain.step();
    seen[static_cast<int>(std::min(chain.assignment().sizes[0], chain.assignment().sizes[1]))] += 1.0 / N;
  }
  double tv = 0;
  for (const auto& [k, v] : expected) tv += std::abs(v - seen[k]);
  CHECK(0.5 * tv < 0.02);
}
