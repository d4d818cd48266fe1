#include "sbmmh/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sbmmh/errors.hpp"
#include "sbmmh/rng.hpp"

namespace sbm {

InitMethod parse_init_method(const std::string& s) {
  if (s == "spectral") return InitMethod::kSpectral;
  if (s == "corrupted-truth") return InitMethod::kCorruptedTruth;
  if (s == "uniform-feasible" || s == "uniform") return InitMethod::kUniformFeasible;
  throw ConfigError("unknown init method '" + s + "'");
}

std::string to_string(InitMethod m) {
  switch (m) {
    case InitMethod::kSpectral: return "spectral";
    case InitMethod::kCorruptedTruth: return "corrupted-truth";
    case InitMethod::kUniformFeasible: return "uniform-feasible";
  }
  return "?";
}

CorruptionPattern parse_corruption_pattern(const std::string& s) {
  if (s == "uniform") return CorruptionPattern::kUniform;
  if (s == "one-sided") return CorruptionPattern::kOneSided;
  throw ConfigError("unknown corruption pattern '" + s + "'");
}

std::string to_string(CorruptionPattern p) { return p == CorruptionPattern::kUniform ? "uniform" : "one-sided"; }

namespace {

RowMajorMatrix multiply(const Adjacency& A, const RowMajorMatrix& X) {
  RowMajorMatrix Y = RowMajorMatrix::Zero(X.rows(), X.cols());
  for (int i = 0; i < A.n(); ++i)
    for (int j : A.neighbors(i)) Y.row(i) += X.row(j);
  return Y;
}

RowMajorMatrix orthonormalize(const RowMajorMatrix& Y) {
  Eigen::HouseholderQR<RowMajorMatrix> qr(Y);
  return qr.householderQ() * RowMajorMatrix::Identity(Y.rows(), Y.cols());
}

}  // namespace

LeadingEigenpairs leading_eigenpairs(const Adjacency& A, int K, std::uint64_t seed, double tol, int max_sweeps) {
  const int n = A.n();
  if (K < 1 || K > n) throw ConfigError("need 1 <= K <= n for the eigen-iteration");
  const int s = std::min(n, K + 16);
  Rng rng(seed);
  RowMajorMatrix X(n, s);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < s; ++k) X(i, k) = 2.0 * rng.uniform() - 1.0;
  RowMajorMatrix Q = orthonormalize(X);

  LeadingEigenpairs out;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const RowMajorMatrix AQ = multiply(A, Q);
    Eigen::MatrixXd H = Q.transpose() * AQ;
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    std::vector<int> order(static_cast<std::size_t>(s));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
    });
    Eigen::MatrixXd V(s, s);
    Eigen::VectorXd theta(s);
    for (int k = 0; k < s; ++k) {
      V.col(k) = es.eigenvectors().col(order[k]);
      theta(k) = es.eigenvalues()(order[k]);
    }
    const RowMajorMatrix Xr = Q * V;
    const RowMajorMatrix AX = AQ * V;
    double residual = 0.0;
    for (int k = 0; k < K; ++k) residual = std::max(residual, (AX.col(k) - theta(k) * Xr.col(k)).norm());
    out.sweeps = sweep;
    out.residual = residual;
    if (residual <= tol * std::max(1.0, std::abs(theta(0))) || s == n) {
      out.vectors = Xr.leftCols(K);
      out.values = theta.head(K);
      return out;
    }
    Q = orthonormalize(AX);
  }
  std::ostringstream msg;
  msg << "eigen-iteration did not converge after " << max_sweeps << " sweeps (residual " << out.residual << ")";
  throw NumericalError(msg.str());
}

KMeansResult kmeans(const RowMajorMatrix& points, int K, std::uint64_t seed, int restarts, int iterations) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (K < 1 || K > n) throw ConfigError("k-means needs 1 <= K <= n");
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (int restart = 0; restart < restarts; ++restart) {
    RowMajorMatrix C(K, d);
    C.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    for (int i = 0; i < n; ++i) dist[i] = (points.row(i) - C.row(0)).squaredNorm();
    for (int k = 1; k < K; ++k) {
      const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
      int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (total > 0.0) {
        double target = rng.uniform() * total;
        for (int i = 0; i < n; ++i) {
          target -= dist[i];
          if (target < 0.0) {
            pick = i;
            break;
          }
        }
      }
      C.row(k) = points.row(pick);
      for (int i = 0; i < n; ++i) dist[i] = std::min(dist[i], (points.row(i) - C.row(k)).squaredNorm());
    }

    Labels z(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int it = 0; it < iterations; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double dm = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
          const double dk = (points.row(i) - C.row(k)).squaredNorm();
          if (dk < dm) {
            dm = dk;
            arg = k;
          }
        }
        changed = changed || z[i] != arg;
        z[i] = arg;
        dist[i] = dm;
        inertia += dm;
      }
      if (!changed) break;
      RowMajorMatrix sum = RowMajorMatrix::Zero(K, d);
      std::vector<int> count(static_cast<std::size_t>(K), 0);
      for (int i = 0; i < n; ++i) {
        sum.row(z[i]) += points.row(i);
        ++count[z[i]];
      }
      for (int k = 0; k < K; ++k) {
        if (count[k] > 0) {
          C.row(k) = sum.row(k) / count[k];
        } else {
          // empty cluster: reseed at the worst-fit point
          const auto far = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
          C.row(k) = points.row(far);
          dist[far] = 0.0;
        }
      }
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = z;
      best.centroids = C;
    }
  }
  return best;
}

void project_to_feasible(Labels& z, int K, const FeasibleBounds& bounds, const std::function<double(int, int)>& cost) {
  const int n = static_cast<int>(z.size());
  if (bounds.lower > bounds.upper || bounds.lower * K > n || bounds.upper * K < n)
    throw ConfigError("feasible set is empty for these parameters");
  auto sizes = community_sizes(z, K);
  for (;;) {
    int over = -1, under = -1;
    for (int a = 0; a < K; ++a) {
      if (over < 0 && sizes[a] > bounds.upper) over = a;
      if (under < 0 && sizes[a] < bounds.lower) under = a;
    }
    if (over < 0 && under < 0) return;
    int best_i = -1, best_c = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const int a = z[i];
      if (over >= 0) {
        if (a != over) continue;
        for (int c = 0; c < K; ++c) {
          if (c == a || sizes[c] >= bounds.upper) continue;
          const double m = cost(i, c) - cost(i, a);
          if (m < best) {
            best = m;
            best_i = i;
            best_c = c;
          }
        }
      } else {
        if (a == under || sizes[a] <= bounds.lower) continue;
        const double m = cost(i, under) - cost(i, a);
        if (m < best) {
          best = m;
          best_i = i;
          best_c = under;
        }
      }
    }
    if (best_i < 0) throw ConfigError("feasibility projection found no admissible move");
    --sizes[z[best_i]];
    ++sizes[best_c];
    z[best_i] = best_c;
  }
}

Labels spectral_init(const Adjacency& A, int K, double alpha, std::uint64_t seed) {
  if (K < 2) throw ConfigError("spectral init needs K >= 2");
  const auto bounds = FeasibleBounds::make(A.n(), K, alpha);
  const auto eig = leading_eigenpairs(A, K, derive_seed(seed, 0));
  auto km = kmeans(eig.vectors, K, derive_seed(seed, 1));
  Labels z = km.labels;
  project_to_feasible(z, K, bounds, [&](int i, int c) {
    return (eig.vectors.row(i) - km.centroids.row(c)).squaredNorm();
  });
  return z;
}

Labels corrupted_truth_init(const Labels& truth, double gamma0, int K, double alpha, CorruptionPattern pattern,
                            std::uint64_t seed) {
  const int n = static_cast<int>(truth.size());
  validate_labels(truth, n, K);
  if (K < 2) throw ConfigError("corruption needs K >= 2");
  if (!(gamma0 >= 0.0) || gamma0 > 1.0 - 1.0 / K + 1e-12)
    throw ConfigError("gamma0 must lie in [0, 1 - 1/K]");
  const auto errors = static_cast<int>(std::llround(gamma0 * n));
  const auto bounds = FeasibleBounds::make(n, K, alpha);
  Rng rng(seed);
  const auto sizes = community_sizes(truth, K);

  auto relabel = [&](Labels& z, int i, int exclude) {
    int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(K - 1)));
    if (c >= exclude) ++c;
    z[i] = c;
  };

  if (pattern == CorruptionPattern::kOneSided) {
    const auto larger = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    std::vector<int> pool;
    for (int i = 0; i < n; ++i)
      if (truth[i] == larger) pool.push_back(i);
    if (errors > static_cast<int>(pool.size()))
      throw ConfigError("one-sided corruption needs more errors than the largest community holds");
    for (int k = 0; k < errors; ++k) {
      const auto j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(pool.size() - k)));
      std::swap(pool[k], pool[j]);
    }
    Labels z = truth;
    for (int k = 0; k < errors; ++k) relabel(z, pool[k], larger);
    if (!in_feasible_set(community_sizes(z, K), bounds))
      throw ConfigError("requested corruption leaves the feasible set");
    return z;
  }

  constexpr int kAttempts = 100;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    for (int k = 0; k < errors; ++k) {
      const auto j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - k)));
      std::swap(order[k], order[j]);
    }
    Labels z = truth;
    for (int k = 0; k < errors; ++k) relabel(z, order[k], truth[order[k]]);
    if (in_feasible_set(community_sizes(z, K), bounds)) return z;
  }
  throw ConfigError("requested corruption leaves the feasible set");
}

Labels uniform_feasible_init(int n, int K, double alpha, std::uint64_t seed) {
  if (K < 1) throw ConfigError("K must be at least 1");
  Rng rng(seed);
  Labels z(static_cast<std::size_t>(n));
  for (auto& zi : z) zi = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  // Random per-(node, label) costs so the repair moves a random subset.
  std::vector<double> noise(static_cast<std::size_t>(n) * K);
  for (auto& v : noise) v = rng.uniform();
  project_to_feasible(z, K, FeasibleBounds::make(n, K, alpha),
                      [&](int i, int c) { return noise[static_cast<std::size_t>(i) * K + c]; });
  return z;
}

Labels initialize(const InitSpec& spec, const Adjacency& A, int K, double alpha, const Labels* truth) {
  switch (spec.method) {
    case InitMethod::kSpectral: return spectral_init(A, K, alpha, spec.seed);
    case InitMethod::kUniformFeasible: return uniform_feasible_init(A.n(), K, alpha, spec.seed);
    case InitMethod::kCorruptedTruth:
      if (!truth) throw ConfigError("corrupted-truth init needs the true labels");
      return corrupted_truth_init(*truth, spec.gamma0, K, alpha, spec.pattern, spec.seed);
  }
  throw ConfigError("unknown init method");
}

}  // namespace sbm
