#include "sbmmh/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "sbmmh/errors.hpp"

namespace sbm {

Chain::Chain(const Adjacency& A, const PosteriorModel& model, Labels z0, std::uint64_t seed, const Labels* truth)
    : graph_(&A),
      model_(&model),
      n_(A.n()),
      K_(model.config().K),
      rng_(seed),
      xi_(model.config().xi) {
  if (model.config().n != n_) throw ConfigError("model configured for a different node count");
  if (K_ < 2) throw ConfigError("the chain needs K >= 2");
  stats_ = count_statistics(A, z0, K_);
  if (!in_feasible_set(stats_.sizes, model.bounds()))
    throw ConfigError("initial assignment lies outside the feasible set");
  comm_degree_.assign(static_cast<std::size_t>(n_) * K_, 0);
  for (int i = 0; i < n_; ++i)
    for (int j : A.neighbors(i)) ++comm_degree_[static_cast<std::size_t>(i) * K_ + stats_.labels[j]];
  terms_ = model.block_terms(stats_);
  log_post_ = model.sum_terms(terms_);
  if (truth) {
    confusion_ = confusion(stats_.labels, *truth, K_);
    truth_ = *truth;
  }
}

FlipDelta Chain::propose(int node, int to) const {
  return model_->flip_delta(stats_, comm_degree(node), node, to, terms_);
}

void Chain::apply(const FlipDelta& flip) {
  const int node = flip.node, b = flip.from, c = flip.to;
  const auto d = comm_degree(node);
  auto edge = [&](int x, int y) -> std::int64_t& { return stats_.block_edges[static_cast<std::size_t>(x) * K_ + y]; };
  const std::int64_t db = d[b], dc = d[c];
  for (int a = 0; a < K_; ++a) {
    if (a == b || a == c) continue;
    edge(b, a) -= d[a];
    edge(a, b) -= d[a];
    edge(c, a) += d[a];
    edge(a, c) += d[a];
  }
  edge(b, b) -= db;
  edge(c, c) += dc;
  edge(b, c) += db - dc;
  edge(c, b) = edge(b, c);

  --stats_.sizes[b];
  ++stats_.sizes[c];
  stats_.labels[node] = c;
  for (int a = 0; a < K_; ++a) {
    for (int x : {b, c}) {
      stats_.block_pairs[static_cast<std::size_t>(x) * K_ + a] =
          x == a ? within_pairs(stats_.sizes[x]) : stats_.sizes[x] * stats_.sizes[a];
      stats_.block_pairs[static_cast<std::size_t>(a) * K_ + x] = stats_.block_pairs[static_cast<std::size_t>(x) * K_ + a];
    }
  }
  for (int u : graph_->neighbors(node)) {
    --comm_degree_[static_cast<std::size_t>(u) * K_ + b];
    ++comm_degree_[static_cast<std::size_t>(u) * K_ + c];
  }
  for (int a = 0; a < K_; ++a) {
    for (int x : {b, c}) {
      const int lo = std::min(x, a), hi = std::max(x, a);
      const double t = model_->block_term(lo, hi, stats_.edges(lo, hi), stats_.pairs(lo, hi));
      terms_[static_cast<std::size_t>(lo) * K_ + hi] = t;
      terms_[static_cast<std::size_t>(hi) * K_ + lo] = t;
    }
  }
  log_post_ = model_->sum_terms(terms_);
  if (!truth_.empty()) {
    --confusion_[static_cast<std::size_t>(b) * K_ + truth_[node]];
    ++confusion_[static_cast<std::size_t>(c) * K_ + truth_[node]];
  }
}

StepOutcome Chain::metropolis_step() {
  StepOutcome out;
  const int node = static_cast<int>(rng_.below(static_cast<std::uint64_t>(n_)));
  const int from = stats_.labels[node];
  int to = static_cast<int>(rng_.below(static_cast<std::uint64_t>(K_ - 1)));
  if (to >= from) ++to;
  const double u = rng_.uniform();
  out.proposal = propose(node, to);
  if (out.proposal.feasible) {
    const double log_ratio = tempered_log_ratio(out.proposal.delta, xi_);
    if (log_ratio >= 0.0 || u < std::exp(log_ratio)) {
      apply(out.proposal);
      out.accepted = true;
    }
  }
  ++iteration_;
  return out;
}

StepOutcome Chain::step() { return metropolis_step(); }

StepOutcome Chain::step_lazy() {
  if (rng_.uniform() < 0.5) {
    ++iteration_;
    StepOutcome out;
    out.lazy_stay = true;
    return out;
  }
  return metropolis_step();
}

double Chain::loss() const {
  if (truth_.empty()) throw ConfigError("chain has no truth attached");
  return static_cast<double>(n_ - best_matching(confusion_, K_)) / static_cast<double>(n_);
}

bool Chain::at_truth() const {
  if (truth_.empty()) return false;
  // Zero loss iff every row and every column of the confusion matrix holds at
  // most one nonzero entry.
  for (int a = 0; a < K_; ++a) {
    int row_nz = 0, col_nz = 0;
    for (int b = 0; b < K_; ++b) {
      row_nz += confusion_[static_cast<std::size_t>(a) * K_ + b] != 0;
      col_nz += confusion_[static_cast<std::size_t>(b) * K_ + a] != 0;
    }
    if (row_nz > 1 || col_nz > 1) return false;
  }
  return true;
}

void Chain::verify(double tol) const {
  const auto fresh = count_statistics(*graph_, stats_.labels, K_);
  if (fresh.sizes != stats_.sizes || fresh.block_edges != stats_.block_edges || fresh.block_pairs != stats_.block_pairs)
    throw NumericalError("cached block counts diverged at iteration " + std::to_string(iteration_));
  for (int i = 0; i < n_; ++i) {
    std::vector<std::int64_t> d(static_cast<std::size_t>(K_), 0);
    for (int j : graph_->neighbors(i)) ++d[stats_.labels[j]];
    const auto cached = comm_degree(i);
    if (!std::equal(d.begin(), d.end(), cached.begin()))
      throw NumericalError("neighbour-community table diverged at node " + std::to_string(i));
  }
  const auto lp = model_->evaluate(fresh);
  if (!lp.feasible || std::abs(lp.value - log_post_) > tol)
    throw NumericalError("cached log posterior drifted at iteration " + std::to_string(iteration_));
}

RunResult run_chain(const Adjacency& A, const PosteriorModel& model, const Labels& z0, const RunOptions& options,
                    std::uint64_t seed, const Labels* truth) {
  Chain chain(A, model, z0, seed, truth);
  RunResult r;
  const std::uint64_t thin = options.thinning == 0 ? static_cast<std::uint64_t>(std::max(A.n(), 1)) : options.thinning;
  r.trajectory.thinning = thin;
  auto record = [&](bool accepted) {
    TrajectoryRecord rec;
    rec.iteration = chain.iteration();
    rec.log_posterior = chain.log_posterior();
    if (truth) rec.loss = chain.loss();
    rec.accepted = accepted;
    r.trajectory.records.push_back(rec);
  };
  record(false);
  if (truth && chain.at_truth()) r.hitting_time = 0;
  bool last_recorded = true;
  for (std::uint64_t t = 0; t < options.iterations; ++t) {
    const auto out = options.lazy ? chain.step_lazy() : chain.step();
    if (out.accepted) {
      ++r.accepted;
      if (truth && !r.hitting_time && chain.at_truth()) r.hitting_time = chain.iteration();
    }
    last_recorded = chain.iteration() % thin == 0;
    if (last_recorded) record(out.accepted);
    if (options.verify_every && chain.iteration() % options.verify_every == 0) chain.verify();
    if (options.stop_at_truth && r.hitting_time) break;
  }
  if (!last_recorded) record(false);
  r.iterations = chain.iteration();
  r.final_labels = chain.labels();
  r.final_log_posterior = chain.log_posterior();
  if (truth) r.final_loss = chain.loss();
  return r;
}

RunResult run_chain(const Adjacency& A, const Labels& z0, const ModelConfig& config, const RunOptions& options,
                    std::uint64_t seed, const Labels* truth) {
  const PosteriorModel model(config);
  return run_chain(A, model, z0, options, seed, truth);
}

std::optional<std::uint64_t> hitting_time(const Adjacency& A, const PosteriorModel& model, const Labels& z0,
                                          const Labels& truth, std::uint64_t max_T, std::uint64_t seed) {
  Chain chain(A, model, z0, seed, &truth);
  if (chain.at_truth()) return 0;
  for (std::uint64_t t = 0; t < max_T; ++t) {
    if (chain.step().accepted && chain.at_truth()) return chain.iteration();
  }
  return std::nullopt;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& t) {
  out << "iteration,log_posterior,loss,accepted\n";
  char buf[64];
  for (const auto& rec : t.records) {
    out << rec.iteration << ',';
    std::snprintf(buf, sizeof buf, "%.17g", rec.log_posterior);
    out << buf << ',';
    if (rec.loss) {
      std::snprintf(buf, sizeof buf, "%.17g", *rec.loss);
      out << buf;
    }
    out << ',' << (rec.accepted ? 1 : 0) << '\n';
  }
}

void write_trajectory_csv_file(const std::string& path, const Trajectory& t) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  write_trajectory_csv(f, t);
}

}  // namespace sbm
