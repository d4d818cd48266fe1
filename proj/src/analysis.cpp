#include "sbmmh/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "sbmmh/errors.hpp"

namespace sbm {

double renyi_I(double p, double q) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) throw ConfigError("renyi_I needs p, q in (0, 1)");
  const double affinity = std::sqrt(p * q) + std::sqrt((1.0 - p) * (1.0 - q));
  return std::max(0.0, -2.0 * std::log(affinity));
}

double effective_size(int n, int K, double beta) {
  return K == 2 ? n / 2.0 : static_cast<double>(n) / (K * beta);
}

SignalReport signal_report(int n, int K, double p, double q, double beta) {
  SignalReport s;
  s.I = renyi_I(p, q);
  s.n_bar = effective_size(n, K, beta);
  const double logn = std::log(static_cast<double>(n));
  s.ratio = s.n_bar * s.I / logn;
  s.epsilon0 = s.I > 0.0 ? 1.0 - logn / (s.n_bar * s.I) : -std::numeric_limits<double>::infinity();
  return s;
}

double loss(const Labels& z, const Labels& z_star, int K) {
  if (z.empty()) return 0.0;
  const auto R = confusion(z, z_star, K);
  return static_cast<double>(static_cast<std::int64_t>(z.size()) - best_matching(R, K)) /
         static_cast<double>(z.size());
}

double balance_of(const Labels& z, int K) {
  const auto sizes = community_sizes(z, K);
  const auto [mn, mx] = std::minmax_element(sizes.begin(), sizes.end());
  const double n = static_cast<double>(z.size());
  if (*mn == 0) return std::numeric_limits<double>::infinity();
  return std::max(K * static_cast<double>(*mx) / n, n / (K * static_cast<double>(*mn)));
}

double mixing_budget(int n, int K, double gamma0, double tau, double xi, double neg_log_post, double epsilon) {
  const double nd = n;
  return 4.0 * K * nd * nd * std::max(gamma0, std::pow(nd, -tau)) * (xi * neg_log_post + std::log(1.0 / epsilon));
}

ConditionReport check_conditions(const ConditionInputs& in) {
  if (in.n < 2 || in.K < 2) throw ConfigError("conditions need n >= 2 and K >= 2");
  if (!(in.alpha > in.beta && in.beta >= 1.0)) throw ConfigError("conditions need alpha > beta >= 1");
  if (!(in.gamma0 >= 0.0 && in.gamma0 <= 1.0)) throw ConfigError("gamma0 must lie in [0, 1]");
  if (!(in.xi >= 1.0)) throw ConfigError("xi must be at least 1");
  if (!(in.epsilon > 0.0 && in.epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");

  ConditionReport r;
  r.signal = signal_report(in.n, in.K, in.p, in.q, in.beta);
  const double I = r.signal.I, e0 = r.signal.epsilon0;
  const double n = in.n, K = in.K, g = in.gamma0;
  r.gamma0_case = in.K == 2 ? 1 : 2;
  r.gamma0_small = g <= 1.0 / in.largeness;
  if (in.K == 2) {
    const double lk = 1.0 - K * g;
    r.gamma0_signal_value = std::pow(std::max(lk, 0.0), 4) * n * I;
    r.gamma0_size_value = lk > 0.0 ? lk * (1.0 - K * in.beta * g) * n : 0.0;
    r.gamma0_ok = lk > 0.0 && r.gamma0_signal_value >= in.largeness && r.gamma0_size_value >= in.largeness;
  } else {
    r.gamma0_ok = r.gamma0_small;
  }
  const double lka = 1.0 - K * in.alpha * g;
  r.known_case2_signal_value = lka > 0.0 ? lka * lka * n * I : 0.0;

  if (in.neg_log_posterior_z0)
    r.mixing_bound = mixing_budget(in.n, in.K, g, in.tau, in.xi, *in.neg_log_posterior_z0, in.epsilon);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  r.above_signal_threshold = e0 > 0.0;
  if (!r.above_signal_threshold) {
    r.status = "signal below strong-consistency threshold";
    r.xi_threshold = r.xi_small_threshold = r.known_case2_xi_threshold = kInf;
    return r;
  }
  r.status = "ok";
  const double base = (1.0 - e0) / (2.0 * e0);
  r.xi_small_threshold = base;
  if (in.K == 2) {
    const double lk = 1.0 - K * g;
    r.xi_threshold = lk > 0.0 ? (1.0 - e0) * std::max(1.0 / (2.0 * e0), in.alpha * in.alpha / std::pow(lk, 4)) : kInf;
  } else {
    r.xi_threshold = base;
  }
  r.xi_ok = in.xi > r.xi_threshold;
  r.gamma0xi_small_ok = r.gamma0_small && in.xi >= base;

  r.known_case1_ok = r.gamma0xi_small_ok;
  if (lka > 0.0) {
    const double denom = in.K == 2 ? 4.0 * lka : 4.0 * in.beta * lka;
    r.known_case2_xi_threshold = (1.0 - e0) * std::max(1.0 / (2.0 * e0), in.alpha / denom);
  } else {
    r.known_case2_xi_threshold = kInf;
  }
  r.known_case2_ok = lka > 0.0 && r.known_case2_signal_value >= in.largeness && in.xi > r.known_case2_xi_threshold;

  r.unknown_b_conditions_met = (r.gamma0_ok && r.xi_ok) || r.gamma0xi_small_ok;
  r.known_b_conditions_met = r.known_case1_ok || r.known_case2_ok;
  return r;
}

// ---------------------------------------------------------------------------
// Exact chain

namespace {

int bits_per_label(int K) {
  int bits = 1;
  while ((1 << bits) < K) ++bits;
  return bits;
}

std::uint64_t encode(const Labels& canon, int bits) {
  std::uint64_t code = 0;
  for (Label a : canon) code = (code << bits) | static_cast<std::uint64_t>(a);
  return code;
}

// Restricted growth strings with at most K blocks, i.e. canonical clusterings.
void enumerate_canonical(int n, int K, const std::function<void(const Labels&)>& visit) {
  Labels z(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (i == n) {
      visit(z);
      return;
    }
    const int top = std::min(used + 1, K);
    for (int a = 0; a < top; ++a) {
      z[i] = a;
      rec(i + 1, std::max(used, a + 1));
    }
  };
  if (n > 0) {
    z[0] = 0;
    rec(1, 1);
  }
}

double log_falling_factorial(int K, int used) {
  double v = 0.0;
  for (int k = 0; k < used; ++k) v += std::log(static_cast<double>(K - k));
  return v;
}

}  // namespace

int ExactChain::index_of(const Labels& z) const {
  const auto it = index.find(encode(canonicalize(z), bits_per_label(K)));
  return it == index.end() ? -1 : it->second;
}

double ExactChain::transition(int from, int to) const {
  if (from == to) return diagonal[from];
  for (const auto& e : off_diagonal[from])
    if (e.to == to) return e.p;
  return 0.0;
}

std::vector<double> ExactChain::propagate(const std::vector<double>& mu) const {
  std::vector<double> next(mu.size(), 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i];
    if (m == 0.0) continue;
    next[i] += m * diagonal[i];
    for (const auto& e : off_diagonal[i]) next[e.to] += m * e.p;
  }
  return next;
}

int ExactChain::most_probable() const {
  return static_cast<int>(std::max_element(stationary.begin(), stationary.end()) - stationary.begin());
}

ExactChain enumerate_exact_chain(const Adjacency& A, const ModelConfig& config, bool lazy, bool compute_spectrum) {
  const PosteriorModel model(config);
  if (config.n != A.n()) throw ConfigError("model configured for a different node count");
  const int n = A.n(), K = config.K;
  if (K < 2) throw ConfigError("exact chain needs K >= 2");
  const int bits = bits_per_label(K);
  if (n * bits > 63) throw GuardExceeded("exact chain: n too large to encode states");

  ExactChain ch;
  ch.n = n;
  ch.K = K;
  ch.lazy = lazy;
  ch.xi = config.xi;

  std::size_t visited = 0;
  enumerate_canonical(n, K, [&](const Labels& z) {
    if (++visited > 100 * kExactStateGuard) throw GuardExceeded("exact chain: enumeration guard exceeded");
    const auto sizes = community_sizes(z, K);
    if (!in_feasible_set(sizes, model.bounds())) return;
    if (ch.states.size() >= kExactStateGuard)
      throw GuardExceeded("exact chain: more than " + std::to_string(kExactStateGuard) + " clustering states");
    const int used = static_cast<int>(std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; }));
    ch.index.emplace(encode(z, bits), static_cast<int>(ch.states.size()));
    ch.states.push_back(z);
    ch.log_posterior.push_back(model.evaluate(count_statistics(A, z, K)).value);
    ch.log_multiplicity.push_back(log_falling_factorial(K, used));
  });
  const std::size_t S = ch.states.size();
  if (S == 0) throw ConfigError("exact chain: feasible set is empty");

  // Stationary: pi(Gamma) proportional to |Gamma| Pi^xi(Z|A).
  std::vector<double> logw(S);
  for (std::size_t i = 0; i < S; ++i) logw[i] = ch.log_multiplicity[i] + config.xi * ch.log_posterior[i];
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double w : logw) total += std::exp(w - mx);
  ch.stationary.resize(S);
  for (std::size_t i = 0; i < S; ++i) ch.stationary[i] = std::exp(logw[i] - mx) / total;

  // Transitions: each (node, new label) proposal has mass 1/(n(K-1)); proposals
  // reaching the same clustering are merged.
  const double proposal = 1.0 / (static_cast<double>(n) * (K - 1));
  const double scale = lazy ? 0.5 : 1.0;
  ch.off_diagonal.resize(S);
  ch.diagonal.resize(S);
  for (std::size_t i = 0; i < S; ++i) {
    std::map<int, double> row;
    Labels z = ch.states[i];
    for (int j = 0; j < n; ++j) {
      const int old = z[j];
      for (int c = 0; c < K; ++c) {
        if (c == old) continue;
        z[j] = c;
        const int k = ch.index_of(z);
        if (k >= 0 && k != static_cast<int>(i)) {
          const double lr = config.xi * (ch.log_posterior[k] - ch.log_posterior[i]);
          row[k] += scale * proposal * std::min(1.0, std::exp(lr));
        }
      }
      z[j] = old;
    }
    double out = 0.0;
    for (const auto& [k, p] : row) {
      ch.off_diagonal[i].push_back({k, p});
      out += p;
    }
    ch.diagonal[i] = 1.0 - out;
  }

  const auto moved = ch.propagate(ch.stationary);
  double err = 0.0;
  for (std::size_t i = 0; i < S; ++i) err = std::max(err, std::abs(moved[i] - ch.stationary[i]));
  if (err > 1e-10) {
    std::ostringstream msg;
    msg << "exact chain: stationary vector not fixed (max error " << err << ")";
    throw NumericalError(msg.str());
  }

  if (compute_spectrum) {
    if (S > kDenseSpectrumGuard)
      throw GuardExceeded("exact chain: dense spectrum guard exceeded (" + std::to_string(S) + " states)");
    // Reversibility makes D^{1/2} P D^{-1/2} symmetric.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
    std::vector<double> root(S);
    for (std::size_t i = 0; i < S; ++i) root[i] = std::sqrt(ch.stationary[i]);
    for (std::size_t i = 0; i < S; ++i) {
      M(i, i) = ch.diagonal[i];
      for (const auto& e : ch.off_diagonal[i]) M(i, e.to) = root[i] / root[e.to] * e.p;
    }
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("exact chain: eigensolver failed");
    ch.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + S);
    std::sort(ch.eigenvalues.begin(), ch.eigenvalues.end(), std::greater<>());
    if (S == 1) {
      ch.gap = 1.0;
    } else {
      const double second = std::max(std::abs(ch.eigenvalues[1]), std::abs(ch.eigenvalues.back()));
      ch.gap = 1.0 - second;
    }
  }
  return ch;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> tv_curve(const ExactChain& chain, int start, std::uint64_t t_max) {
  if (start < 0 || static_cast<std::size_t>(start) >= chain.size()) throw ConfigError("start state out of range");
  std::vector<double> mu(chain.size(), 0.0);
  mu[start] = 1.0;
  std::vector<double> out;
  out.reserve(t_max + 1);
  for (std::uint64_t t = 0;; ++t) {
    out.push_back(total_variation(mu, chain.stationary));
    if (t == t_max) break;
    mu = chain.propagate(mu);
  }
  return out;
}

std::uint64_t exact_mixing_time(const ExactChain& chain, int start, double epsilon, std::uint64_t cap) {
  if (start < 0 || static_cast<std::size_t>(start) >= chain.size()) throw ConfigError("start state out of range");
  std::vector<double> mu(chain.size(), 0.0);
  mu[start] = 1.0;
  for (std::uint64_t t = 0;; ++t) {
    if (total_variation(mu, chain.stationary) <= epsilon) return t;
    if (t == cap) throw GuardExceeded("exact mixing time exceeds cap " + std::to_string(cap));
    mu = chain.propagate(mu);
  }
}

double spectral_mixing_bound(const ExactChain& chain, int start, double epsilon) {
  return (-std::log(chain.stationary[start]) + std::log(1.0 / epsilon)) / chain.gap;
}

PosteriorFloor log_posterior_floor(const Adjacency& A, const Labels& z0, const Labels& truth,
                                   const ModelConfig& config, double p, double q, double C) {
  const PosteriorModel model(config);
  PosteriorFloor f;
  const auto lp0 = model.evaluate(count_statistics(A, z0, config.K));
  const auto lps = model.evaluate(count_statistics(A, truth, config.K));
  f.lhs = lp0.value;
  f.lhs_relative = lp0.value - lps.value;
  f.loss = loss(z0, truth, config.K);
  f.I = renyi_I(p, q);
  const double n = A.n();
  f.rhs = f.loss == 0.0 ? 0.0 : -C * n * n * f.I * f.loss;
  if (f.loss > 0.0) f.implied_constant = -f.lhs_relative / (n * n * f.I * f.loss);
  return f;
}

}  // namespace sbm
