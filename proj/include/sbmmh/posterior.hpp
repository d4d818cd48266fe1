#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "sbmmh/graph.hpp"
#include "sbmmh/labels.hpp"

namespace sbm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Everything that parameterizes prior, posterior and chain.
struct ModelConfig {
  int n = 0;
  int K = 2;
  double alpha = 2.0;   // feasible-set width
  double beta = 1.0;    // truth balance (metadata, must stay below alpha)
  double kappa1 = 1.0;  // Beta prior shapes on each B_ab
  double kappa2 = 1.0;
  double xi = 1.0;      // inverse temperature
  // Present => known-connectivity posterior instead of the collapsed one.
  std::optional<ConnectivityMatrix> connectivity;

  // Throws ConfigError on kappa <= 0, xi < 1, alpha <= beta, beta < 1, K < 1,
  // or a connectivity matrix of the wrong size.
  void validate() const;
};

/// log Pi(Z|A) up to a Z-independent constant. Only differences between
/// assignments under the same (A, config) are meaningful.
struct LogPosterior {
  double value = kNegInf;
  bool feasible = false;
};

/// t* = 1/2 log[p(1-q)/(q(1-p))], lambda* = log[(1-q)/(1-p)] / (2 t*).
struct KnownBConstants {
  double t_star = 0.0;
  double lambda_star = 0.0;

  static KnownBConstants make(double p, double q);
  // Coefficients of the known-B log posterior on (O_s, n_s).
  double edge_weight() const noexcept { return 2.0 * t_star; }
  double pair_weight() const noexcept { return 2.0 * t_star * lambda_star; }
};

// Thread-safe log-gamma.
double log_gamma(double x);
double log_beta_fn(double x, double y);

/// lgamma(i + offset) for integer i, tabulated up to a size limit and
/// evaluated directly beyond it.
class LogGammaTable {
 public:
  static constexpr std::int64_t kMaxTabulated = std::int64_t{1} << 21;

  LogGammaTable() = default;
  LogGammaTable(double offset, std::int64_t max_index);

  double operator()(std::int64_t i) const {
    return i < static_cast<std::int64_t>(values_.size()) ? values_[static_cast<std::size_t>(i)]
                                                         : log_gamma(static_cast<double>(i) + offset_);
  }

 private:
  double offset_ = 0.0;
  std::vector<double> values_;
};

/// Change of a single-node relabel, as computed by PosteriorModel::flip_delta.
struct FlipDelta {
  int node = -1;
  int from = -1;
  int to = -1;
  bool feasible = false;
  double delta = kNegInf;  // log Pi(Z'|A) - log Pi(Z|A); -inf when Z' leaves S_alpha
};

/// Precomputed posterior evaluator for one (n, config). Immutable and
/// shareable across chains.
class PosteriorModel {
 public:
  explicit PosteriorModel(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  const FeasibleBounds& bounds() const noexcept { return bounds_; }
  bool known_connectivity() const noexcept { return config_.connectivity.has_value(); }

  // Contribution of block (a, b), a <= b, with O edges among N pairs.
  double block_term(int a, int b, std::int64_t O, std::int64_t N) const;

  // Per-block terms as a K x K symmetric matrix (only a <= b are summed).
  std::vector<double> block_terms(const LabelAssignment& stats) const;
  // Sum over a <= b in row-major order; the chain uses the same order so its
  // cached value is bit-identical to a from-scratch evaluation.
  double sum_terms(std::span<const double> terms) const;

  LogPosterior evaluate(const LabelAssignment& stats) const;

  // Delta for relabelling node -> to, from the node's neighbour counts per
  // community (comm_degree[k] = #neighbours of node labelled k). Only blocks in
  // the rows of the old and new label are touched. When cached_terms is empty
  // the old terms are recomputed from stats.
  FlipDelta flip_delta(const LabelAssignment& stats, std::span<const std::int64_t> comm_degree, int node,
                       int to, std::span<const double> cached_terms = {}) const;

 private:
  ModelConfig config_;
  FeasibleBounds bounds_;
  std::shared_ptr<const LogGammaTable> lg_k1_, lg_k2_, lg_k12_;
  std::optional<KnownBConstants> known_;
  std::vector<double> log_b_, log_1mb_;
};

LogPosterior log_posterior(const LabelAssignment& stats, const ModelConfig& config);
LogPosterior log_posterior(const Adjacency& A, const Labels& z, const ModelConfig& config);

// Q_LM = sum_{a<=b} n_ab tau(O_ab / n_ab), tau(x) = x log x + (1-x) log(1-x),
// with 0 log 0 = 0 and empty blocks skipped.
double likelihood_modularity(const LabelAssignment& stats);

inline double tempered_log_ratio(double delta, double xi) noexcept {
  return delta == kNegInf ? kNegInf : xi * delta;
}

}  // namespace sbm
