#include "sbmmh/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "sbmmh/errors.hpp"
#include "sbmmh/rng.hpp"

namespace sbm::experiments {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::optional<double> get_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<double>(j, key);
}

std::optional<std::string> get_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<std::string>(j, key);
}

std::string numbered(const std::string& stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.csv", stem.c_str(), i);
  return buf;
}

std::string format_signed(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+g", x);
  return buf;
}

ModelConfig model_from(const json& c, int n, int K, double alpha, double beta) {
  ModelConfig m;
  m.n = n;
  m.K = K;
  m.alpha = alpha;
  m.beta = beta;
  m.kappa1 = get<double>(c, "kappa1");
  m.kappa2 = get<double>(c, "kappa2");
  m.xi = get<double>(c, "xi");
  m.validate();
  return m;
}

json conditions_json(const ConditionReport& r) {
  json j;
  j["status"] = r.status;
  j["I"] = r.signal.I;
  j["n_bar"] = r.signal.n_bar;
  j["nbarI_over_logn"] = r.signal.ratio;
  j["epsilon0"] = r.signal.epsilon0;
  j["above_signal_threshold"] = r.above_signal_threshold;
  j["gamma0_case"] = r.gamma0_case;
  j["gamma0_signal_value"] = r.gamma0_signal_value;
  j["gamma0_size_value"] = r.gamma0_size_value;
  j["gamma0_small"] = r.gamma0_small;
  j["gamma0_ok"] = r.gamma0_ok;
  j["xi_threshold"] = r.xi_threshold;  // null when infinite
  j["xi_ok"] = r.xi_ok;
  j["xi_small_threshold"] = r.xi_small_threshold;
  j["gamma0xi_small_ok"] = r.gamma0xi_small_ok;
  j["known_case1_ok"] = r.known_case1_ok;
  j["known_case2_signal_value"] = r.known_case2_signal_value;
  j["known_case2_xi_threshold"] = r.known_case2_xi_threshold;
  j["known_case2_ok"] = r.known_case2_ok;
  j["unknown_b_conditions_met"] = r.unknown_b_conditions_met;
  j["known_b_conditions_met"] = r.known_b_conditions_met;
  j["mixing_bound"] = r.mixing_bound ? json(*r.mixing_bound) : json(nullptr);
  j["surrogates"] = "'-> infinity' compared against largeness; gamma0 = o(1) read as gamma0 <= 1/largeness";
  return j;
}

// Truth-relative stand-in for -log Pi(Z0|A): the posterior concentrates on
// the truth, so log Pi(Z*|A) is close to 0 after normalization.
double neg_log_posterior_surrogate(double truth_lp, double z0_lp) { return std::max(0.0, truth_lp - z0_lp); }

std::uint64_t auto_iterations(int n, int K, double gamma0, double tau, double xi, double neg_log_post, double eps) {
  const double t = std::ceil(mixing_budget(n, K, gamma0, tau, xi, neg_log_post, eps));
  if (!(t < 1e12)) throw GuardExceeded("automatic iteration budget exceeds 1e12 steps");
  return static_cast<std::uint64_t>(t);
}

struct ChainJob {
  InitSpec init;
  std::uint64_t chain_seed = 0;
  std::string trajectory_file;  // relative to the output root, empty = none
};

struct ChainBatch {
  const Adjacency* A = nullptr;
  const Labels* truth = nullptr;
  const PosteriorModel* model = nullptr;
  double alpha = 2.0;
  double truth_lp = 0.0;
  Budget budget;
  std::uint64_t default_iterations = 0;
  std::uint64_t thinning = 0;
  bool lazy = false;
  double tau = 0.1;
  double epsilon = 0.05;
  int workers = 0;
};

std::vector<ChainSummary> run_batch(const ChainBatch& b, const std::vector<ChainJob>& jobs, OutputDir& out) {
  std::vector<fs::path> paths(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (!jobs[i].trajectory_file.empty()) paths[i] = out.claim(jobs[i].trajectory_file);

  const int n = b.A->n(), K = b.model->config().K;
  std::vector<ChainSummary> results(jobs.size());
  std::vector<Trajectory> trajectories(jobs.size());
  parallel_for(jobs.size(), b.workers, [&](std::size_t i) {
    const auto t0 = Clock::now();
    const auto& job = jobs[i];
    const Labels z0 = initialize(job.init, *b.A, K, b.alpha, b.truth);
    ChainSummary s;
    s.index = i;
    s.init_seed = job.init.seed;
    s.chain_seed = job.chain_seed;
    s.init_loss = b.truth ? loss(z0, *b.truth, K) : 0.0;
    s.init_log_posterior = b.model->evaluate(count_statistics(*b.A, z0, K)).value;
    RunOptions opt;
    opt.lazy = b.lazy;
    opt.thinning = b.thinning;
    if (b.budget.automatic) {
      opt.iterations = auto_iterations(n, K, s.init_loss, b.tau, b.model->config().xi,
                                       neg_log_posterior_surrogate(b.truth_lp, s.init_log_posterior), b.epsilon);
    } else {
      opt.iterations = b.budget.fixed.value_or(b.default_iterations);
    }
    auto r = run_chain(*b.A, *b.model, z0, opt, job.chain_seed, b.truth);
    s.final_loss = r.final_loss.value_or(0.0);
    s.final_log_posterior = r.final_log_posterior;
    s.hitting_time = r.hitting_time;
    s.iterations = r.iterations;
    s.accepted = r.accepted;
    s.reached_truth = b.truth && r.final_log_posterior >= b.truth_lp - kConvergedTolerance;
    s.trajectory_file = job.trajectory_file;
    s.seconds = seconds_since(t0);
    trajectories[i] = std::move(r.trajectory);
    results[i] = s;
  });
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (!paths[i].empty()) write_trajectory_csv_file(paths[i].string(), trajectories[i]);
  return results;
}

json chains_json(const std::vector<ChainSummary>& chains) {
  json arr = json::array();
  for (const auto& s : chains) arr.push_back(to_json(s));
  return arr;
}

json graph_json(const Adjacency& A, std::uint64_t seed) {
  return {{"n", A.n()}, {"edges", A.edge_count()}, {"seed", seed}};
}

// Shared body of the balanced and heterogeneous drivers.
json run_multichain(const std::string& command, const json& c, OutputDir& out, const ConnectivityMatrix& B,
                    const std::vector<int>& sizes, const std::string& scale_note) {
  const auto t0 = Clock::now();
  const auto seed = get<std::uint64_t>(c, "seed");
  const int n = std::accumulate(sizes.begin(), sizes.end(), 0);
  const int K = static_cast<int>(sizes.size());
  const int chains = get<int>(c, "chains");
  if (chains < 1) throw ConfigError("chains must be at least 1");

  const Labels truth = planted_labels(sizes);
  const double beta = balance_of(truth, K);
  const double alpha = get_optional(c, "alpha").value_or(2.0 * beta);
  const ModelConfig cfg = model_from(c, n, K, alpha, beta);
  const PosteriorModel model(cfg);
  const std::uint64_t graph_seed = derive_seed(seed, 0);
  const Adjacency A = generate_sbm(n, B, truth, graph_seed);
  const double truth_lp = model.evaluate(count_statistics(A, truth, K)).value;

  const auto graph_path = out.claim("graph.txt");
  const auto truth_path = out.claim("truth.txt");
  const auto manifest_path = out.claim("manifest.json");

  ChainBatch batch;
  batch.A = &A;
  batch.truth = &truth;
  batch.model = &model;
  batch.alpha = alpha;
  batch.truth_lp = truth_lp;
  batch.budget = parse_budget(c.at("iters"));
  batch.default_iterations = 200ULL * static_cast<std::uint64_t>(n);
  batch.thinning = get<std::uint64_t>(c, "thinning");
  batch.tau = get<double>(c, "tau");
  batch.epsilon = get<double>(c, "epsilon");
  batch.workers = get<int>(c, "workers");
  const InitMethod method = parse_init_method(get<std::string>(c, "init"));

  std::vector<ChainJob> jobs(static_cast<std::size_t>(chains));
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    jobs[i].init.method = method;
    jobs[i].init.gamma0 = get<double>(c, "gamma0");
    jobs[i].init.seed = derive_seed(seed, 1000 + i);
    jobs[i].chain_seed = derive_seed(seed, 2000 + i);
    jobs[i].trajectory_file = numbered("chain", i);
  }
  const auto results = run_batch(batch, jobs, out);

  write_graph_file(graph_path.string(), A);
  write_labels_file(truth_path.string(), truth);

  json m = manifest_header(command, c);
  m["scale"] = {{"paper_scale", get<bool>(c, "paper_scale")}, {"note", scale_note}};
  m["resolved"] = {{"n", n}, {"K", K}, {"sizes", sizes}, {"alpha", alpha}, {"beta", beta},
                   {"connectivity", B.entries()}, {"iterations_default", batch.default_iterations}};
  m["graph"] = graph_json(A, graph_seed);
  m["graph"]["file"] = "graph.txt";
  m["truth_file"] = "truth.txt";
  m["truth_log_posterior"] = truth_lp;
  m["chains"] = chains_json(results);
  std::vector<double> hits;
  int reached = 0;
  for (const auto& s : results) {
    hits.push_back(s.hitting_time ? static_cast<double>(*s.hitting_time) : std::numeric_limits<double>::infinity());
    reached += s.reached_truth;
  }
  std::sort(hits.begin(), hits.end());
  const std::size_t h = hits.size();
  const double median = h % 2 ? hits[h / 2] : 0.5 * (hits[h / 2 - 1] + hits[h / 2]);
  m["summary"] = {{"chains_reaching_truth", reached},
                  {"median_hitting_time", std::isfinite(median) ? json(median) : json(nullptr)}};
  if (B.is_homogeneous()) {
    ConditionInputs in;
    in.n = n;
    in.K = K;
    in.p = B.p();
    in.q = B.q();
    in.alpha = alpha;
    in.beta = beta;
    double g = 0.0;
    for (const auto& s : results) g = std::max(g, s.init_loss);
    in.gamma0 = g;
    in.xi = cfg.xi;
    in.tau = batch.tau;
    in.epsilon = batch.epsilon;
    m["conditions"] = conditions_json(check_conditions(in));
  }
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json_file(manifest_path, m);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

json default_config(const std::string& command) {
  const json model = {{"kappa1", 1.0}, {"kappa2", 1.0}, {"xi", 1.0}};
  json c;
  if (command == "balanced") {
    c = {{"seed", 1},        {"n", 500},        {"K", 5},          {"p", 0.3},        {"q", 0.1},
         {"alpha", nullptr}, {"chains", 20},    {"iters", nullptr}, {"thinning", 0},  {"init", "spectral"},
         {"gamma0", 0.0},    {"paper_scale", false}, {"workers", 0}, {"tau", 0.1},     {"epsilon", 0.05}};
  } else if (command == "heterogeneous") {
    c = {{"seed", 1},          {"n", 400},        {"ratio", {1, 2, 3, 4}}, {"connectivity", nullptr},
         {"alpha", nullptr},   {"chains", 20},    {"iters", nullptr},      {"thinning", 0},
         {"init", "spectral"}, {"gamma0", 0.0},   {"paper_scale", false},  {"workers", 0},
         {"tau", 0.1},         {"epsilon", 0.05}};
  } else if (command == "bad-init") {
    c = {{"seed", 1},         {"sizes", {270, 460}},  {"p", 0.1},         {"q", 1e-8},
         {"alpha", 1.75},     {"epsilons", {0.2, 0.1, -0.1, -0.2}},       {"chains", 20},
         {"iters", 1000000},  {"thinning", 0},        {"posterior", "known"}, {"pattern", "one-sided"},
         {"paper_scale", false}, {"workers", 0}};
  } else if (command == "phase-heatmap") {
    c = {{"seed", 1},
         {"n", 1000},
         {"a_values", {2, 4, 6, 8, 10, 12, 14, 16}},
         {"b_values", {0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4}},
         {"replicates", 10},
         {"iters", nullptr},
         {"alpha", 2.0},
         {"init", "spectral"},
         {"bin_width", 1.0},
         {"last_bin", 5.0},
         {"paper_scale", false},
         {"workers", 0}};
  } else if (command == "exact") {
    c = {{"seed", 1},       {"n", 8},          {"K", 2},        {"p", 0.7},         {"q", 0.15},
         {"alpha", 3.0},    {"lazy", true},    {"epsilon", 0.05}, {"graph", nullptr}, {"truth", nullptr},
         {"tv_steps", 0},   {"paper_scale", false}};
  } else if (command == "check") {
    c = {{"n", 1000},        {"K", 2},          {"p", 0.3},          {"q", 0.1},
         {"alpha", 2.0},     {"beta", 1.0},     {"gamma0", 0.0},     {"tau", 0.1},
         {"epsilon", 0.05},  {"largeness", 10.0}, {"neg_log_posterior_z0", nullptr},
         {"graph", nullptr}, {"init_labels", nullptr}, {"truth", nullptr}, {"seed", 1},
         {"paper_scale", false}};
  } else if (command == "generate") {
    c = {{"seed", 1},          {"n", 100},       {"K", 2},          {"sizes", nullptr},
         {"p", 0.5},           {"q", 0.1},       {"connectivity", nullptr},
         {"paper_scale", false}};
  } else if (command == "sample") {
    c = {{"seed", 1},          {"graph", nullptr},   {"truth", nullptr},   {"init", "spectral"},
         {"init_labels", nullptr}, {"gamma0", 0.0},  {"pattern", "uniform"}, {"K", 2},
         {"alpha", 2.0},       {"beta", 1.0},        {"posterior", "collapsed"}, {"p", nullptr},
         {"q", nullptr},       {"chains", 1},        {"iters", nullptr},   {"thinning", 0},
         {"lazy", false},      {"tau", 0.1},         {"epsilon", 0.05},    {"workers", 0},
         {"paper_scale", false}};
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  c.update(model);
  return c;
}

void merge_config(json& base, const json& overrides, const std::string& where) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    if (!base.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    base[key] = value;
  }
}

json read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file " + path + ": " + e.what());
  }
}

json resolve_config(const std::string& command, const json& file, const json& flags) {
  json c = default_config(command);
  json probe = c;
  merge_config(probe, file, "config file");
  merge_config(probe, flags, "flags");
  if (get<bool>(probe, "paper_scale")) {
    if (command == "balanced") c["n"] = 2500;
    else if (command == "heterogeneous") c["n"] = 2000;
    else if (command == "phase-heatmap") c["replicates"] = 20;
  }
  merge_config(c, file, "config file");
  merge_config(c, flags, "flags");
  return c;
}

Budget parse_budget(const json& value) {
  Budget b;
  if (value.is_null()) return b;
  if (value.is_string()) {
    const auto s = value.get<std::string>();
    if (s == "auto") {
      b.automatic = true;
      return b;
    }
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0])) || used != s.size())
        throw std::invalid_argument(s);
      b.fixed = v;
      return b;
    } catch (const std::exception&) {
      throw ConfigError("iters must be a non-negative integer or 'auto', got '" + s + "'");
    }
  }
  if (value.is_number_integer() && value.get<std::int64_t>() >= 0) {
    b.fixed = value.get<std::uint64_t>();
    return b;
  }
  throw ConfigError("iters must be a non-negative integer or 'auto'");
}

// ---------------------------------------------------------------------------
// Plumbing

OutputDir::OutputDir(fs::path root, bool force) : root_(std::move(root)), force_(force) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw ConfigError("cannot create output directory " + root_.string() + ": " + ec.message());
}

fs::path OutputDir::claim(const std::string& relative) {
  const fs::path p = root_ / relative;
  if (fs::exists(p) && !force_)
    throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw ConfigError("cannot create " + p.parent_path().string() + ": " + ec.message());
  return p;
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& f) {
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers) : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next++) < count;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

json to_json(const ChainSummary& s) {
  return {{"index", s.index},
          {"init_seed", s.init_seed},
          {"chain_seed", s.chain_seed},
          {"init_loss", s.init_loss},
          {"init_log_posterior", s.init_log_posterior},
          {"final_loss", s.final_loss},
          {"final_log_posterior", s.final_log_posterior},
          {"hitting_time", s.hitting_time ? json(*s.hitting_time) : json(nullptr)},
          {"iterations", s.iterations},
          {"accepted", s.accepted},
          {"reached_truth", s.reached_truth},
          {"seconds", s.seconds},
          {"trajectory", s.trajectory_file}};
}

json manifest_header(const std::string& command, const json& resolved) {
  return {{"schema_version", kSchemaVersion},
          {"tool", {{"name", kToolName}, {"version", kToolVersion}}},
          {"revision", kToolVersion},
          {"command", command},
          {"config", resolved},
          {"rng", "xoshiro256** seeded by splitmix64; per-task seeds derive_seed(seed, index)"}};
}

ConnectivityMatrix heterogeneous_connectivity() {
  return ConnectivityMatrix(4, {0.50, 0.29, 0.35, 0.25,  //
                                0.29, 0.45, 0.25, 0.30,  //
                                0.35, 0.25, 0.50, 0.35,  //
                                0.25, 0.30, 0.35, 0.45});
}

std::vector<int> proportional_sizes(int n, const std::vector<int>& ratio) {
  if (ratio.empty()) throw ConfigError("size ratio is empty");
  long long total = 0;
  for (int r : ratio) {
    if (r <= 0) throw ConfigError("size ratio entries must be positive");
    total += r;
  }
  std::vector<int> sizes(ratio.size());
  std::vector<std::pair<long long, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < ratio.size(); ++k) {
    const long long num = static_cast<long long>(n) * ratio[k];
    sizes[k] = static_cast<int>(num / total);
    assigned += sizes[k];
    remainders.emplace_back(num % total, k);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& x, auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[remainders[i % remainders.size()].second];
  return sizes;
}

// ---------------------------------------------------------------------------
// Drivers

json run_balanced(const json& config, OutputDir& out) {
  const int n = get<int>(config, "n"), K = get<int>(config, "K");
  if (K < 2 || n < K) throw ConfigError("balanced study needs K >= 2 and n >= K");
  const std::vector<int> sizes = proportional_sizes(n, std::vector<int>(static_cast<std::size_t>(K), 1));
  const auto B = ConnectivityMatrix::homogeneous(K, get<double>(config, "p"), get<double>(config, "q"));
  const std::string note = get<bool>(config, "paper_scale")
                               ? "full size: 2500 nodes, 5 communities"
                               : "desk scale; full size is 2500 nodes in 5 communities (--paper-scale)";
  return run_multichain("balanced", config, out, B, sizes, note);
}

json run_heterogeneous(const json& config, OutputDir& out) {
  const int n = get<int>(config, "n");
  const auto ratio = get<std::vector<int>>(config, "ratio");
  const std::vector<int> sizes = proportional_sizes(n, ratio);
  ConnectivityMatrix B = heterogeneous_connectivity();
  if (!config.at("connectivity").is_null()) {
    const auto rows = get<std::vector<std::vector<double>>>(config, "connectivity");
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw ConfigError("connectivity must be square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    B = ConnectivityMatrix(static_cast<int>(rows.size()), flat);
  }
  if (B.K() != static_cast<int>(sizes.size())) throw ConfigError("connectivity size differs from the size ratio");
  const std::string note = get<bool>(config, "paper_scale")
                               ? "full size: 2000 nodes, sizes 200/400/600/800"
                               : "desk scale with the 1:2:3:4 size ratio; full size via --paper-scale";
  return run_multichain("heterogeneous", config, out, B, sizes, note);
}

json run_bad_init(const json& c, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto seed = get<std::uint64_t>(c, "seed");
  const auto sizes = get<std::vector<int>>(c, "sizes");
  if (sizes.size() != 2) throw ConfigError("bad-init study uses two communities");
  const int n = sizes[0] + sizes[1], K = 2;
  const double p = get<double>(c, "p"), q = get<double>(c, "q");
  const double alpha = get<double>(c, "alpha");
  const auto epsilons = get<std::vector<double>>(c, "epsilons");
  const int chains = get<int>(c, "chains");
  if (chains < 1) throw ConfigError("chains must be at least 1");
  const auto posterior = get<std::string>(c, "posterior");
  if (posterior != "known" && posterior != "collapsed") throw ConfigError("posterior must be 'known' or 'collapsed'");

  const Labels truth = planted_labels(sizes);
  const double beta = balance_of(truth, K);
  const auto B = ConnectivityMatrix::homogeneous(K, p, q);
  ModelConfig cfg = model_from(c, n, K, alpha, beta);
  if (posterior == "known") cfg.connectivity = B;
  const PosteriorModel model(cfg);
  const std::uint64_t graph_seed = derive_seed(seed, 0);
  const Adjacency A = generate_sbm(n, B, truth, graph_seed);
  const double truth_lp = model.evaluate(count_statistics(A, truth, K)).value;
  const auto pattern = parse_corruption_pattern(get<std::string>(c, "pattern"));

  const auto graph_path = out.claim("graph.txt");
  const auto truth_path = out.claim("truth.txt");
  const auto manifest_path = out.claim("manifest.json");

  ChainBatch batch;
  batch.A = &A;
  batch.truth = &truth;
  batch.model = &model;
  batch.alpha = alpha;
  batch.truth_lp = truth_lp;
  batch.budget = parse_budget(c.at("iters"));
  if (batch.budget.automatic) throw ConfigError("bad-init study needs a fixed iteration count");
  batch.default_iterations = 1000000;
  batch.thinning = get<std::uint64_t>(c, "thinning");
  batch.workers = get<int>(c, "workers");

  json m = manifest_header("bad-init", c);
  m["resolved"] = {{"n", n}, {"K", K}, {"sizes", sizes}, {"alpha", alpha}, {"beta", beta}, {"posterior", posterior}};
  m["graph"] = graph_json(A, graph_seed);
  m["graph"]["file"] = "graph.txt";
  m["truth_file"] = "truth.txt";
  m["truth_log_posterior"] = truth_lp;
  m["converged_rule"] = "final log posterior >= truth log posterior - 1e-6";
  json runs = json::array();
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    const double eps = epsilons[e];
    const double gamma0 = (1.0 - eps) / (2.0 * alpha);
    const std::string dir = "eps_" + format_signed(eps);
    const std::uint64_t eps_seed = derive_seed(seed, 100 + e);
    std::vector<ChainJob> jobs(static_cast<std::size_t>(chains));
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      jobs[i].init = {InitMethod::kCorruptedTruth, gamma0, pattern, derive_seed(eps_seed, 1000 + i)};
      jobs[i].chain_seed = derive_seed(eps_seed, 2000 + i);
      jobs[i].trajectory_file = dir + "/" + numbered("chain", i);
    }
    const auto results = run_batch(batch, jobs, out);
    int converged = 0;
    json tagged = chains_json(results);
    for (std::size_t i = 0; i < results.size(); ++i) {
      converged += results[i].reached_truth;
      tagged[i]["tag"] = results[i].reached_truth ? "converged" : "stuck";
    }
    ConditionInputs in;
    in.n = n;
    in.K = K;
    in.p = p;
    in.q = q;
    in.alpha = alpha;
    in.beta = beta;
    in.gamma0 = std::clamp(gamma0, 0.0, 1.0);
    in.xi = cfg.xi;
    runs.push_back({{"epsilon", eps},
                    {"gamma0", gamma0},
                    {"errors", static_cast<long long>(std::llround(gamma0 * n))},
                    {"converged", converged},
                    {"stuck", chains - converged},
                    {"conditions", conditions_json(check_conditions(in))},
                    {"chains", tagged}});
  }
  m["runs"] = runs;
  write_graph_file(graph_path.string(), A);
  write_labels_file(truth_path.string(), truth);
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json_file(manifest_path, m);
  return m;
}

void write_heatmap_csv(std::ostream& out, const std::vector<HeatmapCell>& cells) {
  out << "a,b,p,q,nI,nI_over_logn,above_limit,skipped,replicates,mean_misclassified\n";
  char buf[512];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d,", c.a, c.b, c.p, c.q, c.nI,
                  c.nI_over_logn, c.above_limit ? 1 : 0, c.skipped ? 1 : 0, c.replicates);
    out << buf;
    if (!c.skipped) {
      std::snprintf(buf, sizeof buf, "%.17g", c.mean_misclassified);
      out << buf;
    }
    out << '\n';
  }
}

std::vector<HeatmapBin> bin_heatmap(const std::vector<HeatmapCell>& cells, double width, double last_lower) {
  if (!(width > 0.0) || !(last_lower > 0.0)) throw ConfigError("bin width and last bin must be positive");
  const int count = static_cast<int>(std::ceil(last_lower / width)) + 1;
  std::vector<HeatmapBin> bins(static_cast<std::size_t>(count));
  std::vector<double> sums(bins.size(), 0.0);
  for (int k = 0; k < count; ++k) {
    bins[k].lower = k * width;
    bins[k].upper = k + 1 < count ? std::min((k + 1) * width, last_lower) : std::numeric_limits<double>::infinity();
  }
  bins.back().lower = last_lower;
  for (const auto& c : cells) {
    if (c.skipped) continue;
    int k = static_cast<int>(std::floor(c.nI_over_logn / width));
    if (c.nI_over_logn >= last_lower) k = count - 1;
    k = std::clamp(k, 0, count - 1);
    ++bins[k].cells;
    sums[k] += c.mean_misclassified;
  }
  std::vector<HeatmapBin> used;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    if (bins[k].cells == 0) continue;
    bins[k].mean_misclassified = sums[k] / bins[k].cells;
    used.push_back(bins[k]);
  }
  return used;
}

json run_phase_heatmap(const json& c, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto seed = get<std::uint64_t>(c, "seed");
  const int n = get<int>(c, "n");
  if (n < 4) throw ConfigError("phase heatmap needs n >= 4");
  const int K = 2;
  const auto a_values = get<std::vector<double>>(c, "a_values");
  const auto b_values = get<std::vector<double>>(c, "b_values");
  const int R = get<int>(c, "replicates");
  if (R < 1) throw ConfigError("replicates must be at least 1");
  const double alpha = get<double>(c, "alpha");
  const Budget budget = parse_budget(c.at("iters"));
  if (budget.automatic) throw ConfigError("phase heatmap needs a fixed iteration count");
  const std::uint64_t iters = budget.fixed.value_or(200ULL * static_cast<std::uint64_t>(n));
  const InitMethod method = parse_init_method(get<std::string>(c, "init"));
  if (method == InitMethod::kCorruptedTruth) throw ConfigError("phase heatmap supports spectral or uniform init");

  const auto grid_path = out.claim("grid.csv");
  const auto manifest_path = out.claim("manifest.json");

  const double logn = std::log(static_cast<double>(n));
  const std::vector<int> sizes{n / 2, n - n / 2};
  const Labels truth = planted_labels(sizes);
  const double beta = balance_of(truth, K);
  const ModelConfig cfg = model_from(c, n, K, alpha, beta);
  const PosteriorModel model(cfg);

  std::vector<HeatmapCell> cells;
  for (double a : a_values) {
    for (double b : b_values) {
      HeatmapCell cell;
      cell.a = a;
      cell.b = b;
      cell.p = a * logn / n;
      cell.q = b * logn / n;
      cell.skipped = !(cell.p > cell.q) || !(cell.p < 1.0) || !(cell.q > 0.0);
      if (!cell.skipped) {
        cell.nI = n * renyi_I(cell.p, cell.q);
        cell.nI_over_logn = cell.nI / logn;
        cell.above_limit = cell.nI > 2.0 * logn;
        cell.replicates = R;
        cell.misclassified.assign(static_cast<std::size_t>(R), 0.0);
      }
      cells.push_back(std::move(cell));
    }
  }
  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t k = 0; k < cells.size(); ++k)
    if (!cells[k].skipped)
      for (int r = 0; r < R; ++r) tasks.emplace_back(k, r);

  parallel_for(tasks.size(), get<int>(c, "workers"), [&](std::size_t t) {
    const auto [k, r] = tasks[t];
    auto& cell = cells[k];
    const std::uint64_t cell_seed = derive_seed(seed, k);
    const auto B = ConnectivityMatrix::homogeneous(K, cell.p, cell.q);
    const Adjacency A = generate_sbm(n, B, truth, derive_seed(cell_seed, 3ULL * r));
    InitSpec init;
    init.method = method;
    init.seed = derive_seed(cell_seed, 3ULL * r + 1);
    const Labels z0 = initialize(init, A, K, alpha, &truth);
    RunOptions opt;
    opt.iterations = iters;
    opt.thinning = std::max<std::uint64_t>(iters, 1);
    const auto res = run_chain(A, model, z0, opt, derive_seed(cell_seed, 3ULL * r + 2), &truth);
    cell.misclassified[static_cast<std::size_t>(r)] = std::round(*res.final_loss * n);
  });
  for (auto& cell : cells) {
    if (cell.skipped) continue;
    double s = 0.0;
    for (double v : cell.misclassified) s += v;
    cell.mean_misclassified = s / R;
  }

  {
    std::ofstream f(grid_path);
    if (!f) throw ConfigError("cannot write " + grid_path.string());
    write_heatmap_csv(f, cells);
  }
  json m = manifest_header("phase-heatmap", c);
  m["resolved"] = {{"n", n}, {"K", K}, {"sizes", sizes}, {"alpha", alpha}, {"beta", beta},
                   {"iterations", iters}, {"log_n", logn}};
  m["grid_file"] = "grid.csv";
  m["axes"] = "p = a log(n)/n, q = b log(n)/n";
  json jc = json::array();
  for (const auto& cell : cells)
    jc.push_back({{"a", cell.a},
                  {"b", cell.b},
                  {"p", cell.p},
                  {"q", cell.q},
                  {"skipped", cell.skipped},
                  {"nI_over_logn", cell.nI_over_logn},
                  {"above_limit", cell.above_limit},
                  {"misclassified", cell.misclassified},
                  {"mean_misclassified", cell.skipped ? json(nullptr) : json(cell.mean_misclassified)}});
  m["cells"] = jc;
  json jb = json::array();
  for (const auto& bin : bin_heatmap(cells, get<double>(c, "bin_width"), get<double>(c, "last_bin")))
    jb.push_back({{"lower", bin.lower},
                  {"upper", std::isfinite(bin.upper) ? json(bin.upper) : json(nullptr)},
                  {"cells", bin.cells},
                  {"mean_misclassified", bin.mean_misclassified}});
  m["bins"] = jb;
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json_file(manifest_path, m);
  return m;
}

json run_exact(const json& c, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto seed = get<std::uint64_t>(c, "seed");
  const int K = get<int>(c, "K");
  const double alpha = get<double>(c, "alpha");
  const double eps = get<double>(c, "epsilon");
  if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
  const bool lazy = get<bool>(c, "lazy");
  const auto report_path = out.claim("exact_report.json");

  Adjacency A;
  std::optional<std::uint64_t> graph_seed;
  if (auto path = get_path(c, "graph")) {
    A = read_graph_file(*path);
  } else {
    const int n = get<int>(c, "n");
    if (n < K) throw ConfigError("exact chain needs n >= K");
    const Labels planted = planted_labels(proportional_sizes(n, std::vector<int>(static_cast<std::size_t>(K), 1)));
    graph_seed = derive_seed(seed, 0);
    A = generate_sbm(n, ConnectivityMatrix::homogeneous(K, get<double>(c, "p"), get<double>(c, "q")), planted,
                     *graph_seed);
  }
  const int n = A.n();
  Labels truth;
  if (auto path = get_path(c, "truth")) truth = read_labels_file(*path);
  else truth = planted_labels(proportional_sizes(n, std::vector<int>(static_cast<std::size_t>(K), 1)));
  validate_labels(truth, n, K);

  // beta is metadata for the posterior; the exact chain does not need the
  // truth to be feasible.
  ModelConfig cfg;
  cfg.n = n;
  cfg.K = K;
  cfg.alpha = alpha;
  cfg.beta = 1.0;
  cfg.kappa1 = get<double>(c, "kappa1");
  cfg.kappa2 = get<double>(c, "kappa2");
  cfg.xi = get<double>(c, "xi");
  cfg.validate();
  const ExactChain chain = enumerate_exact_chain(A, cfg, lazy);

  json starts = json::array();
  int violations = 0;
  for (std::size_t s = 0; s < chain.size(); ++s) {
    const auto tmix = exact_mixing_time(chain, static_cast<int>(s), eps);
    const double bound = spectral_mixing_bound(chain, static_cast<int>(s), eps);
    const bool ok = static_cast<double>(tmix) <= bound;
    violations += !ok;
    starts.push_back({{"state", chain.states[s]},
                      {"log_posterior", chain.log_posterior[s]},
                      {"stationary", chain.stationary[s]},
                      {"mixing_time", tmix},
                      {"bound", bound},
                      {"bound_holds", ok}});
  }
  json m = manifest_header("exact", c);
  m["graph"] = {{"n", n}, {"edges", A.edge_count()}, {"edge_list", A.edge_list()}};
  if (graph_seed) m["graph"]["seed"] = *graph_seed;
  m["K"] = K;
  m["alpha"] = alpha;
  m["xi"] = cfg.xi;
  m["lazy"] = lazy;
  m["epsilon"] = eps;
  m["state_count"] = chain.size();
  m["gap"] = chain.gap;
  m["eigenvalues"] = chain.eigenvalues;
  const int ti = chain.index_of(truth);
  m["truth_state"] = ti >= 0 ? json(chain.states[ti]) : json(nullptr);
  m["stationary_truth"] = ti >= 0 ? json(chain.stationary[ti]) : json(nullptr);
  m["most_probable_state"] = chain.states[chain.most_probable()];
  m["starts"] = starts;
  m["bound_violations"] = violations;
  if (const int steps = get<int>(c, "tv_steps"); steps > 0 && ti >= 0) {
    m["tv_curve_from_truth"] = tv_curve(chain, ti, static_cast<std::uint64_t>(steps));
  }
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json_file(report_path, m);
  return m;
}

json run_check(const json& c) {
  ConditionInputs in;
  in.n = get<int>(c, "n");
  in.K = get<int>(c, "K");
  in.p = get<double>(c, "p");
  in.q = get<double>(c, "q");
  in.alpha = get<double>(c, "alpha");
  in.beta = get<double>(c, "beta");
  in.gamma0 = get<double>(c, "gamma0");
  in.xi = get<double>(c, "xi");
  in.tau = get<double>(c, "tau");
  in.epsilon = get<double>(c, "epsilon");
  in.largeness = get<double>(c, "largeness");
  in.neg_log_posterior_z0 = get_optional(c, "neg_log_posterior_z0");
  std::string surrogate = in.neg_log_posterior_z0 ? "given" : "none";

  const auto graph = get_path(c, "graph");
  const auto init = get_path(c, "init_labels");
  if (graph && init && !in.neg_log_posterior_z0) {
    const Adjacency A = read_graph_file(*graph);
    const Labels z0 = read_labels_file(*init);
    in.n = A.n();
    ModelConfig cfg;
    cfg.n = in.n;
    cfg.K = in.K;
    cfg.alpha = in.alpha;
    cfg.beta = in.beta;
    cfg.kappa1 = get<double>(c, "kappa1");
    cfg.kappa2 = get<double>(c, "kappa2");
    cfg.xi = in.xi;
    cfg.validate();
    const PosteriorModel model(cfg);
    validate_labels(z0, in.n, in.K);
    const double lp0 = model.evaluate(count_statistics(A, z0, in.K)).value;
    if (auto tpath = get_path(c, "truth")) {
      const Labels truth = read_labels_file(*tpath);
      validate_labels(truth, in.n, in.K);
      in.gamma0 = loss(z0, truth, in.K);
      in.neg_log_posterior_z0 =
          neg_log_posterior_surrogate(model.evaluate(count_statistics(A, truth, in.K)).value, lp0);
      surrogate = "log posterior at truth minus log posterior at Z0";
    } else {
      const double nn = in.n;
      in.neg_log_posterior_z0 = nn * nn * renyi_I(in.p, in.q) * in.gamma0;
      surrogate = "n^2 I gamma0";
    }
  } else if (graph || init) {
    throw ConfigError("check needs both graph and init_labels to evaluate the mixing budget");
  }
  json m = manifest_header("check", c);
  m["inputs"] = {{"n", in.n}, {"K", in.K}, {"p", in.p}, {"q", in.q}, {"alpha", in.alpha}, {"beta", in.beta},
                 {"gamma0", in.gamma0}, {"xi", in.xi}, {"tau", in.tau}, {"epsilon", in.epsilon},
                 {"largeness", in.largeness}};
  m["neg_log_posterior_z0"] = in.neg_log_posterior_z0 ? json(*in.neg_log_posterior_z0) : json(nullptr);
  m["neg_log_posterior_source"] = surrogate;
  m["conditions"] = conditions_json(check_conditions(in));
  return m;
}

json run_generate(const json& c, OutputDir& out) {
  const auto seed = get<std::uint64_t>(c, "seed");
  int K = get<int>(c, "K");
  const int n = get<int>(c, "n");
  std::vector<int> sizes;
  if (!c.at("sizes").is_null()) {
    sizes = get<std::vector<int>>(c, "sizes");
    K = static_cast<int>(sizes.size());
    if (std::accumulate(sizes.begin(), sizes.end(), 0) != n) throw ConfigError("sizes must sum to n");
  } else {
    if (K < 1 || n < K) throw ConfigError("generate needs 1 <= K <= n");
    sizes = proportional_sizes(n, std::vector<int>(static_cast<std::size_t>(K), 1));
  }
  ConnectivityMatrix B;
  if (!c.at("connectivity").is_null()) {
    const auto rows = get<std::vector<std::vector<double>>>(c, "connectivity");
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw ConfigError("connectivity must be square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    B = ConnectivityMatrix(static_cast<int>(rows.size()), flat);
  } else {
    B = ConnectivityMatrix::homogeneous(K, get<double>(c, "p"), get<double>(c, "q"));
  }
  if (B.K() != K) throw ConfigError("connectivity size differs from K");
  const auto graph_path = out.claim("graph.txt");
  const auto truth_path = out.claim("truth.txt");
  const auto manifest_path = out.claim("manifest.json");
  const Labels truth = planted_labels(sizes);
  const std::uint64_t graph_seed = derive_seed(seed, 0);
  const Adjacency A = generate_sbm(n, B, truth, graph_seed);
  write_graph_file(graph_path.string(), A);
  write_labels_file(truth_path.string(), truth);
  json m = manifest_header("generate", c);
  m["graph"] = graph_json(A, graph_seed);
  m["graph"]["file"] = "graph.txt";
  m["truth_file"] = "truth.txt";
  m["sizes"] = sizes;
  m["connectivity"] = B.entries();
  write_json_file(manifest_path, m);
  return m;
}

json run_sample(const json& c, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto seed = get<std::uint64_t>(c, "seed");
  const auto graph = get_path(c, "graph");
  if (!graph) throw ConfigError("sample needs a graph file (--graph)");
  const Adjacency A = read_graph_file(*graph);
  const int n = A.n(), K = get<int>(c, "K");
  std::optional<Labels> truth;
  if (auto path = get_path(c, "truth")) {
    truth = read_labels_file(*path);
    validate_labels(*truth, n, K);
  }
  const double alpha = get<double>(c, "alpha");
  ModelConfig cfg = model_from(c, n, K, alpha, get<double>(c, "beta"));
  const auto posterior = get<std::string>(c, "posterior");
  const auto p = get_optional(c, "p"), q = get_optional(c, "q");
  if (posterior == "known") {
    if (!p || !q) throw ConfigError("known posterior needs p and q");
    cfg.connectivity = ConnectivityMatrix::homogeneous(K, *p, *q);
  } else if (posterior != "collapsed") {
    throw ConfigError("posterior must be 'known' or 'collapsed'");
  }
  const PosteriorModel model(cfg);
  const int chains = get<int>(c, "chains");
  if (chains < 1) throw ConfigError("chains must be at least 1");
  const auto manifest_path = out.claim("manifest.json");

  std::optional<Labels> fixed_init;
  if (auto path = get_path(c, "init_labels")) {
    fixed_init = read_labels_file(*path);
    validate_labels(*fixed_init, n, K);
    if (!in_feasible_set(*fixed_init, K, alpha)) throw ConfigError("init labels lie outside the feasible set");
  }
  const Budget budget = parse_budget(c.at("iters"));
  const InitMethod method = parse_init_method(get<std::string>(c, "init"));
  const auto pattern = parse_corruption_pattern(get<std::string>(c, "pattern"));
  const double tau = get<double>(c, "tau"), eps = get<double>(c, "epsilon");
  const std::uint64_t thinning = get<std::uint64_t>(c, "thinning");
  const bool lazy = get<bool>(c, "lazy");
  const double truth_lp = truth ? model.evaluate(count_statistics(A, *truth, K)).value : 0.0;

  std::vector<fs::path> paths;
  for (int i = 0; i < chains; ++i) paths.push_back(out.claim(numbered("chain", static_cast<std::size_t>(i))));
  std::vector<ChainSummary> results(static_cast<std::size_t>(chains));
  std::vector<Trajectory> trajectories(results.size());
  parallel_for(results.size(), get<int>(c, "workers"), [&](std::size_t i) {
    const auto tc = Clock::now();
    InitSpec spec{method, get<double>(c, "gamma0"), pattern, derive_seed(seed, 1000 + i)};
    const Labels z0 = fixed_init ? *fixed_init : initialize(spec, A, K, alpha, truth ? &*truth : nullptr);
    const double lp0 = model.evaluate(count_statistics(A, z0, K)).value;
    RunOptions opt;
    opt.lazy = lazy;
    opt.thinning = thinning;
    if (budget.automatic) {
      double gamma0 = spec.gamma0, nlp = 0.0;
      if (truth) {
        gamma0 = loss(z0, *truth, K);
        nlp = neg_log_posterior_surrogate(truth_lp, lp0);
      } else if (p && q) {
        nlp = static_cast<double>(n) * n * renyi_I(*p, *q) * gamma0;
      } else {
        throw ConfigError("iters=auto needs a truth file or p and q");
      }
      opt.iterations = auto_iterations(n, K, gamma0, tau, cfg.xi, nlp, eps);
    } else {
      opt.iterations = budget.fixed.value_or(200ULL * static_cast<std::uint64_t>(n));
    }
    const std::uint64_t chain_seed = derive_seed(seed, 2000 + i);
    auto r = run_chain(A, model, z0, opt, chain_seed, truth ? &*truth : nullptr);
    ChainSummary s;
    s.index = i;
    s.init_seed = fixed_init ? 0 : spec.seed;
    s.chain_seed = chain_seed;
    s.init_loss = truth ? loss(z0, *truth, K) : 0.0;
    s.init_log_posterior = lp0;
    s.final_loss = r.final_loss.value_or(0.0);
    s.final_log_posterior = r.final_log_posterior;
    s.hitting_time = r.hitting_time;
    s.iterations = r.iterations;
    s.accepted = r.accepted;
    s.reached_truth = truth && r.final_log_posterior >= truth_lp - kConvergedTolerance;
    s.trajectory_file = paths[i].filename().string();
    s.seconds = seconds_since(tc);
    results[i] = s;
    trajectories[i] = std::move(r.trajectory);
  });
  for (std::size_t i = 0; i < results.size(); ++i) write_trajectory_csv_file(paths[i].string(), trajectories[i]);
  json m = manifest_header("sample", c);
  m["graph"] = {{"n", n}, {"edges", A.edge_count()}, {"file", *graph}};
  m["truth_log_posterior"] = truth ? json(truth_lp) : json(nullptr);
  m["chains"] = chains_json(results);
  m["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json_file(manifest_path, m);
  return m;
}

}  // namespace sbm::experiments
