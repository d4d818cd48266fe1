#include "sbmmh/posterior.hpp"

#include <cmath>
#include <string>

#include "sbmmh/errors.hpp"

namespace sbm {

void ModelConfig::validate() const {
  if (K < 1) throw ConfigError("K must be at least 1");
  if (n < 0) throw ConfigError("n must be nonnegative");
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0)) throw ConfigError("kappa1 and kappa2 must be positive");
  if (!(xi >= 1.0)) throw ConfigError("xi must be at least 1");
  if (!(beta >= 1.0)) throw ConfigError("beta must be at least 1");
  if (!(alpha > beta)) throw ConfigError("alpha must exceed beta");
  if (connectivity && connectivity->K() != K)
    throw ConfigError("connectivity matrix has K=" + std::to_string(connectivity->K()) +
                      ", config has K=" + std::to_string(K));
}

KnownBConstants KnownBConstants::make(double p, double q) {
  if (!(0.0 < q && q < p && p < 1.0)) throw ConfigError("known-B constants need 0 < q < p < 1");
  KnownBConstants c;
  const double log_odds = std::log(p * (1.0 - q) / (q * (1.0 - p)));
  c.t_star = 0.5 * log_odds;
  c.lambda_star = std::log((1.0 - q) / (1.0 - p)) / log_odds;
  return c;
}

double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

double log_beta_fn(double x, double y) { return log_gamma(x) + log_gamma(y) - log_gamma(x + y); }

LogGammaTable::LogGammaTable(double offset, std::int64_t max_index) : offset_(offset) {
  const std::int64_t count = std::min(max_index + 1, kMaxTabulated);
  values_.resize(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = log_gamma(static_cast<double>(i) + offset);
}

PosteriorModel::PosteriorModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  bounds_ = FeasibleBounds::make(config_.n, config_.K, config_.alpha);
  if (config_.connectivity) {
    const auto& B = *config_.connectivity;
    if (B.is_homogeneous()) {
      known_ = KnownBConstants::make(B.p(), B.q());
    } else {
      const int K = config_.K;
      log_b_.resize(static_cast<std::size_t>(K) * K);
      log_1mb_.resize(log_b_.size());
      for (int a = 0; a < K; ++a) {
        for (int b = 0; b < K; ++b) {
          log_b_[static_cast<std::size_t>(a) * K + b] = std::log(B(a, b));
          log_1mb_[static_cast<std::size_t>(a) * K + b] = std::log1p(-B(a, b));
        }
      }
    }
  } else {
    const std::int64_t max_pairs = within_pairs(config_.n);
    lg_k1_ = std::make_shared<LogGammaTable>(config_.kappa1, max_pairs);
    lg_k2_ = std::make_shared<LogGammaTable>(config_.kappa2, max_pairs);
    lg_k12_ = std::make_shared<LogGammaTable>(config_.kappa1 + config_.kappa2, max_pairs);
  }
}

double PosteriorModel::block_term(int a, int b, std::int64_t O, std::int64_t N) const {
  if (!config_.connectivity) return (*lg_k1_)(O) + (*lg_k2_)(N - O) - (*lg_k12_)(N);
  if (known_) {
    if (a != b) return 0.0;
    return known_->edge_weight() * static_cast<double>(O) - known_->pair_weight() * static_cast<double>(N);
  }
  // General known B: O log B_ab + (N - O) log(1 - B_ab), with 0 log 0 = 0.
  const std::size_t idx = static_cast<std::size_t>(a) * config_.K + b;
  const double on = O == 0 ? 0.0 : static_cast<double>(O) * log_b_[idx];
  const double off = N - O == 0 ? 0.0 : static_cast<double>(N - O) * log_1mb_[idx];
  return on + off;
}

std::vector<double> PosteriorModel::block_terms(const LabelAssignment& stats) const {
  const int K = config_.K;
  std::vector<double> terms(static_cast<std::size_t>(K) * K, 0.0);
  for (int a = 0; a < K; ++a) {
    for (int b = a; b < K; ++b) {
      const double t = block_term(a, b, stats.edges(a, b), stats.pairs(a, b));
      terms[static_cast<std::size_t>(a) * K + b] = t;
      terms[static_cast<std::size_t>(b) * K + a] = t;
    }
  }
  return terms;
}

double PosteriorModel::sum_terms(std::span<const double> terms) const {
  const int K = config_.K;
  double total = 0.0;
  for (int a = 0; a < K; ++a)
    for (int b = a; b < K; ++b) total += terms[static_cast<std::size_t>(a) * K + b];
  return total;
}

LogPosterior PosteriorModel::evaluate(const LabelAssignment& stats) const {
  if (stats.K != config_.K || stats.n() != config_.n)
    throw ConfigError("statistics do not match the model configuration");
  if (!in_feasible_set(stats.sizes, bounds_)) return {};
  return {sum_terms(block_terms(stats)), true};
}

FlipDelta PosteriorModel::flip_delta(const LabelAssignment& stats, std::span<const std::int64_t> comm_degree,
                                     int node, int to, std::span<const double> cached_terms) const {
  const int K = config_.K;
  FlipDelta f;
  f.node = node;
  f.from = stats.labels[node];
  f.to = to;
  if (to < 0 || to >= K) throw ConfigError("new label " + std::to_string(to) + " outside [0,K)");
  if (to == f.from) throw ConfigError("flip must change the label");
  const int b = f.from;
  const std::int64_t size_b = stats.sizes[b] - 1;
  const std::int64_t size_c = stats.sizes[to] + 1;
  if (!bounds_.contains(size_b) || !bounds_.contains(size_c)) return f;

  auto old_term = [&](int x, int y) {
    return cached_terms.empty() ? block_term(std::min(x, y), std::max(x, y), stats.edges(x, y), stats.pairs(x, y))
                                : cached_terms[static_cast<std::size_t>(x) * K + y];
  };
  auto new_size = [&](int a) { return a == b ? size_b : a == to ? size_c : stats.sizes[a]; };
  auto term_after = [&](int x, int y, std::int64_t dO) {
    const std::int64_t N = x == y ? within_pairs(new_size(x)) : new_size(x) * new_size(y);
    return block_term(std::min(x, y), std::max(x, y), stats.edges(x, y) + dO, N);
  };

  // Neighbour-count identities for moving one node from b to c:
  //   O_bb -= d_b, O_cc += d_c, O_bc += d_b - d_c, O_ba -= d_a, O_ca += d_a.
  double delta = 0.0;
  delta += term_after(b, b, -comm_degree[b]) - old_term(b, b);
  delta += term_after(to, to, comm_degree[to]) - old_term(to, to);
  delta += term_after(b, to, comm_degree[b] - comm_degree[to]) - old_term(b, to);
  for (int a = 0; a < K; ++a) {
    if (a == b || a == to) continue;
    delta += term_after(b, a, -comm_degree[a]) - old_term(b, a);
    delta += term_after(to, a, comm_degree[a]) - old_term(to, a);
  }
  f.feasible = true;
  f.delta = delta;
  return f;
}

LogPosterior log_posterior(const LabelAssignment& stats, const ModelConfig& config) {
  return PosteriorModel(config).evaluate(stats);
}

LogPosterior log_posterior(const Adjacency& A, const Labels& z, const ModelConfig& config) {
  return PosteriorModel(config).evaluate(count_statistics(A, z, config.K));
}

double likelihood_modularity(const LabelAssignment& stats) {
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  double q = 0.0;
  for (int a = 0; a < stats.K; ++a) {
    for (int b = a; b < stats.K; ++b) {
      const auto N = stats.pairs(a, b);
      if (N == 0) continue;
      const double x = static_cast<double>(stats.edges(a, b)) / static_cast<double>(N);
      q += static_cast<double>(N) * (xlogx(x) + xlogx(1.0 - x));
    }
  }
  return q;
}

}  // namespace sbm
