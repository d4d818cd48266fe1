#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sbmmh/graph.hpp"
#include "sbmmh/labels.hpp"
#include "sbmmh/posterior.hpp"

namespace sbm {

// Renyi divergence of order 1/2 between Bernoulli(p) and Bernoulli(q).
double renyi_I(double p, double q);

// Effective sample size: n/2 for K = 2, n/(K beta) otherwise.
double effective_size(int n, int K, double beta);

struct SignalReport {
  double I = 0.0;
  double n_bar = 0.0;
  double ratio = 0.0;     // n_bar I / log n
  double epsilon0 = 0.0;  // 1 - log n / (n_bar I), finite-n surrogate of the limsup
};

SignalReport signal_report(int n, int K, double p, double q, double beta);

// Misclassification proportion min_sigma H(sigma o z, z_star) / n.
double loss(const Labels& z, const Labels& z_star, int K);

// Smallest community-size imbalance beta for which the labels satisfy
// n/(beta K) <= n_k <= beta n / K.
double balance_of(const Labels& z, int K);

struct ConditionInputs {
  int n = 0;
  int K = 2;
  double p = 0.0;
  double q = 0.0;
  double alpha = 2.0;
  double beta = 1.0;
  double gamma0 = 0.0;
  double xi = 1.0;
  double tau = 0.1;
  double epsilon = 0.05;     // mixing tolerance in the budget
  double largeness = 10.0;   // finite stand-in for "-> infinity"
  // Surrogate for -log Pi(Z0|A); enables the mixing budget.
  std::optional<double> neg_log_posterior_z0;
};

/// Finite-n evaluation of the rapid-mixing conditions. Conditions phrased as
/// "sequence -> infinity" are reported as values and compared against
/// `largeness`; "gamma0 = o(1)" is read as gamma0 <= 1/largeness.
struct ConditionReport {
  SignalReport signal;
  bool above_signal_threshold = false;
  std::string status;

  // Initialization condition (case 1: K = 2, case 2: K >= 3).
  int gamma0_case = 1;
  double gamma0_signal_value = 0.0;  // (1 - K gamma0)^4 n I  (K = 2)
  double gamma0_size_value = 0.0;    // (1 - K gamma0)(1 - K beta gamma0) n  (K = 2)
  bool gamma0_small = false;         // gamma0 <= 1/largeness
  bool gamma0_ok = false;

  // Temperature condition paired with the initialization condition.
  double xi_threshold = 0.0;  // strict
  bool xi_ok = false;

  // Alternative weak-consistency condition.
  double xi_small_threshold = 0.0;  // non-strict
  bool gamma0xi_small_ok = false;

  // Known-connectivity conditions.
  bool known_case1_ok = false;
  double known_case2_signal_value = 0.0;  // (1 - K alpha gamma0)^2 n I
  double known_case2_xi_threshold = 0.0;  // strict
  bool known_case2_ok = false;

  bool unknown_b_conditions_met = false;
  bool known_b_conditions_met = false;

  std::optional<double> mixing_bound;
};

ConditionReport check_conditions(const ConditionInputs& in);

// 4 K n^2 max{gamma0, n^-tau} (xi * neg_log_post + log(1/eps)).
double mixing_budget(int n, int K, double gamma0, double tau, double xi, double neg_log_post, double epsilon);

/// Exact Metropolis chain on the clustering space {Gamma(Z) : Z in S_alpha}
/// for small instances. States are canonical label vectors (labels in order
/// of first appearance).
struct ExactChain {
  struct Entry {
    int to;
    double p;
  };

  int n = 0;
  int K = 0;
  bool lazy = false;
  double xi = 1.0;
  std::vector<Labels> states;
  std::vector<double> log_posterior;  // unnormalized at the representative
  std::vector<double> log_multiplicity;  // log |Gamma|
  std::vector<double> stationary;
  std::vector<std::vector<Entry>> off_diagonal;  // sorted by target
  std::vector<double> diagonal;
  std::vector<double> eigenvalues;  // decreasing; empty when not computed
  double gap = 0.0;

  std::size_t size() const noexcept { return states.size(); }
  // Index of Gamma(z), or -1 when z is infeasible.
  int index_of(const Labels& z) const;
  double transition(int from, int to) const;
  // Distribution after one step from mu.
  std::vector<double> propagate(const std::vector<double>& mu) const;
  int most_probable() const;

  std::unordered_map<std::uint64_t, int> index;
};

inline constexpr std::size_t kExactStateGuard = 100000;
inline constexpr std::size_t kDenseSpectrumGuard = 5000;

// Builds the chain, verifies the stationary vector is fixed (1e-10) and, when
// requested, the spectrum of D^{1/2} P D^{-1/2}.
ExactChain enumerate_exact_chain(const Adjacency& A, const ModelConfig& config, bool lazy,
                                 bool compute_spectrum = true);

double total_variation(const std::vector<double>& a, const std::vector<double>& b);

// TV at t = 0..t_max from a point mass at start.
std::vector<double> tv_curve(const ExactChain& chain, int start, std::uint64_t t_max);

// Smallest t with TV(P^t(start, .), pi) <= epsilon. TV to the stationary
// distribution is nonincreasing in t for any kernel fixing pi, so the first
// crossing is the mixing time. Throws GuardExceeded past cap.
std::uint64_t exact_mixing_time(const ExactChain& chain, int start, double epsilon, std::uint64_t cap = 1000000);

// (-log pi(start) + log(1/eps)) / gap.
double spectral_mixing_bound(const ExactChain& chain, int start, double epsilon);

struct PosteriorFloor {
  double lhs = 0.0;           // log Pi(Z0|A), unnormalized
  double lhs_relative = 0.0;  // log Pi(Z0|A) - log Pi(Z*|A)
  double rhs = 0.0;           // -C n^2 I loss
  double loss = 0.0;
  double I = 0.0;
  // -lhs_relative / (n^2 I loss), the constant this draw would need; nullopt at loss 0.
  std::optional<double> implied_constant;
};

PosteriorFloor log_posterior_floor(const Adjacency& A, const Labels& z0, const Labels& truth,
                                   const ModelConfig& config, double p, double q, double C = 1.0);

}  // namespace sbm
