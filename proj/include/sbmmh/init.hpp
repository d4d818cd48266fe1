#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

#include "sbmmh/graph.hpp"
#include "sbmmh/labels.hpp"

namespace sbm {

enum class InitMethod { kSpectral, kCorruptedTruth, kUniformFeasible };
enum class CorruptionPattern { kUniform, kOneSided };

InitMethod parse_init_method(const std::string& s);
std::string to_string(InitMethod m);
CorruptionPattern parse_corruption_pattern(const std::string& s);
std::string to_string(CorruptionPattern p);

struct InitSpec {
  InitMethod method = InitMethod::kSpectral;
  double gamma0 = 0.0;  // corrupted-truth only, in [0, 1 - 1/K]
  CorruptionPattern pattern = CorruptionPattern::kUniform;
  std::uint64_t seed = 0;
};

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LeadingEigenpairs {
  RowMajorMatrix vectors;  // n x K, orthonormal columns
  Eigen::VectorXd values;  // sorted by decreasing |lambda|
  int sweeps = 0;
  double residual = 0.0;   // max_k ||A v_k - lambda_k v_k||
};

// Block orthogonal iteration with Rayleigh-Ritz on a K+16 dimensional
// subspace; converged when every leading residual is below
// tol * max(1, |lambda_1|). Throws NumericalError after max_sweeps.
LeadingEigenpairs leading_eigenpairs(const Adjacency& A, int K, std::uint64_t seed, double tol = 1e-8,
                                     int max_sweeps = 500);

struct KMeansResult {
  Labels labels;
  RowMajorMatrix centroids;
  double inertia = 0.0;
};

// k-means++ seeding, Lloyd iterations, best of `restarts` by inertia.
KMeansResult kmeans(const RowMajorMatrix& points, int K, std::uint64_t seed, int restarts = 20, int iterations = 100);

// Greedy repair into the size window: while a community is oversized (or
// undersized), move the node whose cost increase cost(i, c) - cost(i, Z_i)
// is smallest, from an oversized community (or one that can spare a node).
void project_to_feasible(Labels& z, int K, const FeasibleBounds& bounds,
                         const std::function<double(int, int)>& cost);

Labels spectral_init(const Adjacency& A, int K, double alpha, std::uint64_t seed);

Labels corrupted_truth_init(const Labels& truth, double gamma0, int K, double alpha, CorruptionPattern pattern,
                            std::uint64_t seed);

Labels uniform_feasible_init(int n, int K, double alpha, std::uint64_t seed);

// Dispatch on spec.method; truth is required for corrupted-truth.
Labels initialize(const InitSpec& spec, const Adjacency& A, int K, double alpha, const Labels* truth);

}  // namespace sbm
