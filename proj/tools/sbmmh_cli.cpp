// Command-line front end: graph generation, sampling, exact-chain analysis,
// condition checks and the four experiment drivers.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sbmmh/errors.hpp"
#include "sbmmh/experiments.hpp"

namespace {

using sbm::experiments::json;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> chains;
  std::string iters;
  std::optional<double> xi;
  std::optional<double> alpha;
  bool paper_scale = false;
  bool force = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, CommonFlags& f, bool with_outputs = true) {
  app->add_option("--config", f.config_path, "JSON config file; flags override its values");
  app->add_option("--seed", f.seed, "Base seed (u64)");
  if (with_outputs) {
    app->add_option("--out", f.out, "Output directory");
    app->add_flag("--force", f.force, "Overwrite existing output files");
  }
  app->add_option("--chains", f.chains, "Number of chains");
  app->add_option("--iters", f.iters, "Iterations per chain, or 'auto' for the mixing-time budget");
  app->add_option("--xi", f.xi, "Inverse temperature (>= 1)");
  app->add_option("--alpha", f.alpha, "Feasible-set parameter alpha");
  app->add_flag("--paper-scale", f.paper_scale, "Use the full problem sizes (balanced n=2500, heterogeneous n=2000, heatmap 20 replicates)");
  app->add_option("--set", f.sets, "Override any config key: key=<JSON value> (repeatable)");
}

json flag_overrides(const CommonFlags& f) {
  json j = json::object();
  if (f.seed) j["seed"] = *f.seed;
  if (f.chains) j["chains"] = *f.chains;
  if (!f.iters.empty()) j["iters"] = f.iters;
  if (f.xi) j["xi"] = *f.xi;
  if (f.alpha) j["alpha"] = *f.alpha;
  if (f.paper_scale) j["paper_scale"] = true;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw sbm::ConfigError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // bare strings such as paths
    }
    j[key] = value;
  }
  return j;
}

json resolve(const std::string& command, const CommonFlags& f, const json& extra) {
  const json file = f.config_path.empty() ? json(nullptr) : sbm::experiments::read_config_file(f.config_path);
  json flags = flag_overrides(f);
  for (const auto& [k, v] : extra.items()) flags[k] = v;
  return sbm::experiments::resolve_config(command, file, flags);
}

void print_summary(const json& m) {
  json s;
  s["command"] = m.at("command");
  for (const char* key : {"truth_log_posterior", "summary", "state_count", "gap", "bound_violations", "bins"})
    if (m.contains(key)) s[key] = m.at(key);
  if (m.contains("runs")) {
    json runs = json::array();
    for (const auto& r : m.at("runs"))
      runs.push_back({{"epsilon", r.at("epsilon")}, {"converged", r.at("converged")}, {"stuck", r.at("stuck")}});
    s["runs"] = runs;
  }
  std::cout << s.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tempered single-flip Metropolis-Hastings for stochastic block models"};
  app.require_subcommand(1);

  CommonFlags gen_f, sample_f, exact_f, check_f;
  std::string graph_path, truth_path, init_method, init_labels, check_graph, check_init, check_truth;

  auto* gen = app.add_subcommand("generate", "Generate an SBM graph and its planted labels");
  add_common(gen, gen_f);

  auto* sample = app.add_subcommand("sample", "Run chains on a graph file");
  add_common(sample, sample_f);
  sample->add_option("--graph", graph_path, "Graph file (n=<count> header, one 'i j' edge per line)");
  sample->add_option("--truth", truth_path, "True labels file, enables loss and hitting time");
  sample->add_option("--init", init_method, "spectral | corrupted-truth | uniform-feasible");
  sample->add_option("--init-labels", init_labels, "Initial labels file (overrides --init)");

  auto* exact = app.add_subcommand("exact", "Exact clustering-space chain on a small instance");
  add_common(exact, exact_f);
  exact->add_option("--graph", graph_path, "Graph file (default: generated fixture)");

  auto* check = app.add_subcommand("check", "Evaluate the rapid-mixing conditions");
  add_common(check, check_f);
  check->add_option("--graph", check_graph, "Graph file, for the mixing budget");
  check->add_option("--init-labels", check_init, "Initial labels, for the mixing budget");
  check->add_option("--truth", check_truth, "True labels");

  auto* experiment = app.add_subcommand("experiment", "Reproduce a numerical study");
  experiment->require_subcommand(1);
  const std::vector<std::string> kinds{"balanced", "heterogeneous", "bad-init", "phase-heatmap"};
  std::vector<CommonFlags> exp_flags(kinds.size());
  std::vector<CLI::App*> exp_apps;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    exp_apps.push_back(experiment->add_subcommand(kinds[k], "Run the " + kinds[k] + " study"));
    add_common(exp_apps.back(), exp_flags[k]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(sbm::ExitCode::kConfig);
  }

  auto out_dir = [](const CommonFlags& f, const std::string& fallback) {
    return sbm::experiments::OutputDir(f.out.empty() ? fallback : f.out, f.force);
  };

  try {
    if (*gen) {
      const json c = resolve("generate", gen_f, json::object());
      auto out = out_dir(gen_f, "out/generate");
      print_summary(sbm::experiments::run_generate(c, out));
    } else if (*sample) {
      json extra = json::object();
      if (!graph_path.empty()) extra["graph"] = graph_path;
      if (!truth_path.empty()) extra["truth"] = truth_path;
      if (!init_method.empty()) extra["init"] = init_method;
      if (!init_labels.empty()) extra["init_labels"] = init_labels;
      const json c = resolve("sample", sample_f, extra);
      auto out = out_dir(sample_f, "out/sample");
      print_summary(sbm::experiments::run_sample(c, out));
    } else if (*exact) {
      json extra = json::object();
      if (!graph_path.empty()) extra["graph"] = graph_path;
      const json c = resolve("exact", exact_f, extra);
      auto out = out_dir(exact_f, "out/exact");
      print_summary(sbm::experiments::run_exact(c, out));
    } else if (*check) {
      json extra = json::object();
      if (!check_graph.empty()) extra["graph"] = check_graph;
      if (!check_init.empty()) extra["init_labels"] = check_init;
      if (!check_truth.empty()) extra["truth"] = check_truth;
      const json c = resolve("check", check_f, extra);
      const json report = sbm::experiments::run_check(c);
      if (!check_f.out.empty()) {
        sbm::experiments::OutputDir out(check_f.out, check_f.force);
        sbm::experiments::write_json_file(out.claim("conditions.json"), report);
      }
      std::cout << report.dump(2) << '\n';
    } else {
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        if (!*exp_apps[k]) continue;
        const json c = resolve(kinds[k], exp_flags[k], json::object());
        auto out = out_dir(exp_flags[k], "out/" + kinds[k]);
        json m;
        if (kinds[k] == "balanced") m = sbm::experiments::run_balanced(c, out);
        else if (kinds[k] == "heterogeneous") m = sbm::experiments::run_heterogeneous(c, out);
        else if (kinds[k] == "bad-init") m = sbm::experiments::run_bad_init(c, out);
        else m = sbm::experiments::run_phase_heatmap(c, out);
        print_summary(m);
      }
    }
  } catch (const sbm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return static_cast<int>(sbm::ExitCode::kConfig);
  } catch (const sbm::GuardExceeded& e) {
    std::fprintf(stderr, "guard exceeded: %s\n", e.what());
    return static_cast<int>(sbm::ExitCode::kGuard);
  } catch (const sbm::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return static_cast<int>(sbm::ExitCode::kNumerical);
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return static_cast<int>(sbm::ExitCode::kConfig);
  }
  return 0;
}
