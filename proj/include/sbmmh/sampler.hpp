#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbmmh/graph.hpp"
#include "sbmmh/labels.hpp"
#include "sbmmh/posterior.hpp"
#include "sbmmh/rng.hpp"

namespace sbm {

struct StepOutcome {
  bool accepted = false;
  bool lazy_stay = false;  // lazy kernel chose to hold
  FlipDelta proposal;      // unset when lazy_stay
};

/// Single-flip Metropolis-Hastings chain targeting Pi^xi(Z|A) on S_alpha.
///
/// Caches the count statistics, per-block posterior terms and, for every
/// node, the number of neighbours in each community, so a proposal costs
/// O(K) and an accepted move O(deg + K).
///
/// Random draws per step, in order: [lazy only: one uniform, hold if < 1/2],
/// node = below(n), label offset = below(K-1) (skipping the current label),
/// one uniform u for acceptance (always drawn). The move is accepted iff it stays in S_alpha and
/// xi*delta >= 0 or u < exp(xi*delta).
class Chain {
 public:
  // The graph and model must outlive the chain. z0 must lie in S_alpha.
  Chain(const Adjacency& A, const PosteriorModel& model, Labels z0, std::uint64_t seed,
        const Labels* truth = nullptr);

  StepOutcome step();
  StepOutcome step_lazy();

  // Delta for an arbitrary proposal from the current state.
  FlipDelta propose(int node, int to) const;
  // Applies a feasible proposal computed from the current state.
  void apply(const FlipDelta& flip);

  const LabelAssignment& assignment() const noexcept { return stats_; }
  const Labels& labels() const noexcept { return stats_.labels; }
  double log_posterior() const noexcept { return log_post_; }
  std::uint64_t iteration() const noexcept { return iteration_; }
  std::span<const std::int64_t> comm_degree(int node) const {
    return {comm_degree_.data() + static_cast<std::size_t>(node) * K_, static_cast<std::size_t>(K_)};
  }

  bool has_truth() const noexcept { return !truth_.empty(); }
  // Misclassification proportion against the truth (permutation-minimised).
  double loss() const;
  // Loss is exactly zero, decided from the confusion matrix in O(K^2).
  bool at_truth() const;

  // Recomputes every cache from scratch; throws NumericalError when the
  // cached log posterior drifts beyond tol or integer caches differ.
  void verify(double tol = 1e-8) const;

 private:
  StepOutcome metropolis_step();

  const Adjacency* graph_;
  const PosteriorModel* model_;
  int n_;
  int K_;
  LabelAssignment stats_;
  std::vector<std::int64_t> comm_degree_;
  std::vector<double> terms_;
  double log_post_ = 0.0;
  std::uint64_t iteration_ = 0;
  Rng rng_;
  double xi_;
  Labels truth_;
  std::vector<std::int64_t> confusion_;
};

struct TrajectoryRecord {
  std::uint64_t iteration = 0;
  double log_posterior = 0.0;
  std::optional<double> loss;
  bool accepted = false;
};

struct Trajectory {
  std::uint64_t thinning = 1;
  std::vector<TrajectoryRecord> records;
};

struct RunOptions {
  std::uint64_t iterations = 0;
  std::uint64_t thinning = 0;       // 0 => every n steps
  bool lazy = false;
  std::uint64_t verify_every = 10000;  // cache integrity check interval, 0 disables
  bool stop_at_truth = false;       // used by hitting_time
};

struct RunResult {
  Trajectory trajectory;
  Labels final_labels;
  double final_log_posterior = 0.0;
  std::optional<double> final_loss;
  std::uint64_t accepted = 0;
  std::uint64_t iterations = 0;
  std::optional<std::uint64_t> hitting_time;  // first t with loss 0, when truth given
};

RunResult run_chain(const Adjacency& A, const PosteriorModel& model, const Labels& z0, const RunOptions& options,
                    std::uint64_t seed, const Labels* truth = nullptr);
RunResult run_chain(const Adjacency& A, const Labels& z0, const ModelConfig& config, const RunOptions& options,
                    std::uint64_t seed, const Labels* truth = nullptr);

// First iteration with zero loss against the truth, or nullopt after max_T.
std::optional<std::uint64_t> hitting_time(const Adjacency& A, const PosteriorModel& model, const Labels& z0,
                                          const Labels& truth, std::uint64_t max_T, std::uint64_t seed);

// CSV with header iteration,log_posterior,loss,accepted.
void write_trajectory_csv(std::ostream& out, const Trajectory& t);
void write_trajectory_csv_file(const std::string& path, const Trajectory& t);

}  // namespace sbm
