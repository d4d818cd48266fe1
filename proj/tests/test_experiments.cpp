#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sbmmh/errors.hpp"
#include "sbmmh/experiments.hpp"

using namespace sbm;
using namespace sbm::experiments;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sbmmh_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("config resolution: defaults, file, flags, paper scale") {
  const json flags = {{"chains", 3}, {"iters", "auto"}};
  const json c = resolve_config("balanced", json({{"n", 60}, {"chains", 9}}), flags);
  CHECK(c.at("n") == 60);
  CHECK(c.at("chains") == 3);  // flags win over the file
  CHECK(c.at("iters") == "auto");
  CHECK(c.at("K") == 5);
  CHECK(resolve_config("balanced", nullptr, {{"paper_scale", true}}).at("n") == 2500);
  CHECK(resolve_config("balanced", nullptr, {{"paper_scale", true}, {"n", 700}}).at("n") == 700);
  CHECK(resolve_config("heterogeneous", nullptr, {{"paper_scale", true}}).at("n") == 2000);
  CHECK(resolve_config("phase-heatmap", nullptr, {{"paper_scale", true}}).at("replicates") == 20);
  CHECK_THROWS_AS(resolve_config("balanced", nullptr, {{"nodes", 5}}), ConfigError);
  CHECK_THROWS_AS(resolve_config("nonsense", nullptr, json::object()), ConfigError);
  CHECK_THROWS_AS(resolve_config("balanced", json::array(), json::object()), ConfigError);
  for (const char* cmd : {"balanced", "heterogeneous", "bad-init", "phase-heatmap", "exact", "check", "generate",
                          "sample"})
    CHECK(default_config(cmd).is_object());
}

TEST_CASE("config files") {
  const auto dir = scratch("config");
  fs::create_directories(dir);
  std::ofstream(dir / "good.json") << R"({"n": 40, "seed": 3})";
  std::ofstream(dir / "bad.json") << R"({"n": 40,)";
  CHECK(read_config_file((dir / "good.json").string()).at("seed") == 3);
  CHECK_THROWS_AS(read_config_file((dir / "bad.json").string()), ConfigError);
  CHECK_THROWS_AS(read_config_file((dir / "missing.json").string()), ConfigError);
}

TEST_CASE("iteration budget parsing") {
  CHECK_FALSE(parse_budget(nullptr).fixed.has_value());
  CHECK_FALSE(parse_budget(nullptr).automatic);
  CHECK(parse_budget("auto").automatic);
  CHECK(parse_budget(1234).fixed == std::optional<std::uint64_t>(1234));
  CHECK(parse_budget("5000").fixed == std::optional<std::uint64_t>(5000));
  CHECK_THROWS_AS(parse_budget("-3"), ConfigError);
  CHECK_THROWS_AS(parse_budget("many"), ConfigError);
  CHECK_THROWS_AS(parse_budget(-3), ConfigError);
  CHECK_THROWS_AS(parse_budget(2.5), ConfigError);
}

TEST_CASE("output directory refuses to overwrite without force") {
  const auto dir = scratch("outdir");
  {
    OutputDir out(dir, false);
    const auto p = out.claim("sub/file.txt");
    std::ofstream(p) << "x";
    CHECK(fs::exists(dir / "sub"));
    CHECK_THROWS_AS(out.claim("sub/file.txt"), ConfigError);
  }
  OutputDir forced(dir, true);
  CHECK_NOTHROW(forced.claim("sub/file.txt"));
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  for (int workers : {1, 3, 0}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, workers, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) REQUIRE(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(10, 2,
                               [](std::size_t i) {
                                 if (i == 7) throw ConfigError("boom");
                               }),
                  ConfigError);
  CHECK_NOTHROW(parallel_for(0, 4, [](std::size_t) {}));
}

TEST_CASE("proportional sizes") {
  CHECK(proportional_sizes(400, {1, 2, 3, 4}) == std::vector<int>{40, 80, 120, 160});
  CHECK(proportional_sizes(2000, {1, 2, 3, 4}) == std::vector<int>{200, 400, 600, 800});
  CHECK(proportional_sizes(10, {1, 1, 1}) == std::vector<int>{4, 3, 3});
  CHECK_THROWS_AS(proportional_sizes(10, {}), ConfigError);
  CHECK_THROWS_AS(proportional_sizes(10, {1, 0}), ConfigError);
}

TEST_CASE("heterogeneous connectivity fixture") {
  const double expect[16] = {0.50, 0.29, 0.35, 0.25, 0.29, 0.45, 0.25, 0.30,
                             0.35, 0.25, 0.50, 0.35, 0.25, 0.30, 0.35, 0.45};
  const auto B = heterogeneous_connectivity();
  REQUIRE(B.K() == 4);
  for (int i = 0; i < 16; ++i) CHECK(B.entries()[i] == expect[i]);
  CHECK_FALSE(B.is_homogeneous());
}

TEST_CASE("heterogeneous run records beta and a feasible alpha") {
  const auto dir = scratch("hetero");
  OutputDir out(dir, false);
  const json c = resolve_config("heterogeneous", nullptr, {{"n", 100}, {"chains", 2}, {"iters", 2000}, {"workers", 1}});
  const json m = run_heterogeneous(c, out);
  CHECK(m.at("resolved").at("sizes") == json({10, 20, 30, 40}));
  // max(K max/n, n/(K min)) = max(1.6, 2.5)
  CHECK(m.at("resolved").at("beta").get<double>() == doctest::Approx(2.5));
  CHECK(m.at("resolved").at("alpha").get<double>() == doctest::Approx(5.0));
  CHECK_FALSE(m.contains("conditions"));
  CHECK(fs::exists(dir / "chain_01.csv"));
}

TEST_CASE("balanced run writes trajectories and reproduces them byte for byte") {
  const json flags = {{"n", 60}, {"K", 3}, {"p", 0.5}, {"q", 0.05}, {"chains", 3}, {"iters", 3000}, {"workers", 2}};
  const json c = resolve_config("balanced", nullptr, flags);
  const auto d1 = scratch("balanced1"), d2 = scratch("balanced2");
  OutputDir o1(d1, false), o2(d2, false);
  const json m1 = run_balanced(c, o1);
  run_balanced(c, o2);
  for (const char* f : {"chain_00.csv", "chain_01.csv", "chain_02.csv", "graph.txt", "truth.txt"}) {
    REQUIRE(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  CHECK_FALSE(fs::exists(d1 / "chain_03.csv"));
  const json disk = read_json(d1 / "manifest.json");
  CHECK(disk.at("schema_version") == kSchemaVersion);
  CHECK(disk.at("command") == "balanced");
  CHECK(disk.at("config") == c);
  CHECK(disk.at("truth_log_posterior").is_number());
  CHECK(disk.at("resolved").at("alpha").get<double>() == doctest::Approx(2.0));
  CHECK(disk.at("chains").size() == 3);
  CHECK(disk.at("scale").at("note").get<std::string>().find("desk scale") != std::string::npos);
  CHECK(m1.at("summary").at("chains_reaching_truth") == 3);
  const std::string csv = slurp(d1 / "chain_00.csv");
  CHECK(csv.rfind("iteration,log_posterior,loss,accepted\n", 0) == 0);
  // Rerunning into an existing directory needs force.
  OutputDir again(d1, false);
  CHECK_THROWS_AS(run_balanced(c, again), ConfigError);
  OutputDir forced(d1, true);
  CHECK_NOTHROW(run_balanced(c, forced));
}

TEST_CASE("single-chain balanced run") {
  const auto dir = scratch("single");
  OutputDir out(dir, false);
  run_balanced(resolve_config("balanced", nullptr, {{"n", 30}, {"K", 2}, {"chains", 1}, {"iters", 100}}), out);
  CHECK(fs::exists(dir / "chain_00.csv"));
  CHECK_FALSE(fs::exists(dir / "chain_01.csv"));
  OutputDir out2(scratch("zero"), false);
  CHECK_THROWS_AS(run_balanced(resolve_config("balanced", nullptr, {{"chains", 0}}), out2), ConfigError);
}

TEST_CASE("automatic budget follows the mixing-budget formula") {
  const auto dir = scratch("auto");
  OutputDir out(dir, false);
  const json c = resolve_config("balanced", nullptr,
                                {{"n", 40}, {"K", 2}, {"p", 0.6}, {"q", 0.05}, {"chains", 1}, {"iters", "auto"},
                                 {"init", "corrupted-truth"}, {"gamma0", 0.1}, {"tau", 0.5}});
  const json m = run_balanced(c, out);
  const auto& ch = m.at("chains").at(0);
  const double L = std::max(0.0, m.at("truth_log_posterior").get<double>() - ch.at("init_log_posterior").get<double>());
  const double expect = std::ceil(mixing_budget(40, 2, 0.1, 0.5, 1.0, L, 0.05));
  CHECK(ch.at("iterations").get<double>() == expect);
}

TEST_CASE("bad-init driver: one-sided errors, tags and degenerate epsilon") {
  const auto dir = scratch("badinit");
  OutputDir out(dir, false);
  const json c = resolve_config("bad-init", nullptr,
                                {{"epsilons", {1.0, 0.2}}, {"chains", 2}, {"iters", 20000}, {"workers", 1}});
  const json m = run_bad_init(c, out);
  REQUIRE(m.at("runs").size() == 2);
  const auto& zero = m.at("runs").at(0);
  CHECK(zero.at("errors") == 0);
  CHECK(zero.at("converged") == 2);
  for (const auto& ch : zero.at("chains")) {
    CHECK(ch.at("tag") == "converged");
    CHECK(ch.at("hitting_time") == 0);
  }
  const auto& pos = m.at("runs").at(1);
  CHECK(pos.at("errors") == std::llround(730 * 0.8 / (2 * 1.75)));
  CHECK(pos.at("chains").at(0).at("init_loss").get<double>() == doctest::Approx(167.0 / 730));
  const bool dir_exists = fs::exists(dir / "eps_+1.0" / "chain_00.csv") || fs::exists(dir / "eps_+1" / "chain_00.csv");
  CHECK(dir_exists);
  CHECK(m.at("resolved").at("posterior") == "known");
  // Epsilon that asks for more corruption than the window allows.
  OutputDir out2(scratch("badinit2"), false);
  CHECK_THROWS_AS(run_bad_init(resolve_config("bad-init", nullptr, {{"epsilons", {-2.0}}, {"chains", 1}}), out2),
                  ConfigError);
}

TEST_CASE("heatmap CSV, skipped cells and binning") {
  const auto dir = scratch("heatmap");
  OutputDir out(dir, false);
  const json c = resolve_config("phase-heatmap", nullptr,
                                {{"n", 60}, {"a_values", {2, 12}}, {"b_values", {2, 1}}, {"replicates", 2},
                                 {"iters", 2000}, {"workers", 1}});
  const json m = run_phase_heatmap(c, out);
  REQUIRE(m.at("cells").size() == 4);
  CHECK(m.at("cells").at(0).at("skipped") == true);  // p = q
  CHECK(m.at("cells").at(1).at("skipped") == false);
  CHECK(m.at("cells").at(0).at("mean_misclassified").is_null());
  std::istringstream csv(slurp(dir / "grid.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "a,b,p,q,nI,nI_over_logn,above_limit,skipped,replicates,mean_misclassified");
  int rows = 0;
  std::getline(csv, line);
  CHECK(line.substr(line.size() - 1) == ",");  // skipped cell has an empty mean
  ++rows;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 4);

  std::vector<HeatmapCell> cells(4);
  cells[0].nI_over_logn = 0.5, cells[0].mean_misclassified = 10;
  cells[1].nI_over_logn = 0.7, cells[1].mean_misclassified = 20;
  cells[2].nI_over_logn = 7.0, cells[2].mean_misclassified = 0;
  cells[3].skipped = true;
  const auto bins = bin_heatmap(cells, 1.0, 5.0);
  // Empty bins are dropped; the last bin is open above.
  REQUIRE(bins.size() == 2);
  CHECK(bins[0].lower == 0.0);
  CHECK(bins[0].upper == 1.0);
  CHECK(bins[0].cells == 2);
  CHECK(bins[0].mean_misclassified == doctest::Approx(15.0));
  CHECK(bins[1].lower == 5.0);
  CHECK(std::isinf(bins[1].upper));
  CHECK(bins[1].cells == 1);
  CHECK_THROWS_AS(bin_heatmap(cells, 0.0, 5.0), ConfigError);
}

TEST_CASE("exact report") {
  const auto dir = scratch("exact");
  OutputDir out(dir, false);
  const json m = run_exact(resolve_config("exact", nullptr, json::object()), out);
  CHECK(m.at("state_count") == 119);
  CHECK(m.at("gap").get<double>() > 0.0);
  CHECK(m.at("bound_violations") == 0);
  for (const auto& s : m.at("starts")) CHECK(s.at("bound").get<double>() >= s.at("mixing_time").get<double>());
  CHECK(read_json(dir / "exact_report.json").at("state_count") == 119);
  OutputDir out2(scratch("exact1"), false);
  const json one = run_exact(resolve_config("exact", nullptr, {{"epsilon", 1.0}}), out2);
  for (const auto& s : one.at("starts")) CHECK(s.at("mixing_time") == 0);
  OutputDir out3(scratch("exact2"), false);
  CHECK_THROWS_AS(run_exact(resolve_config("exact", nullptr, {{"n", 30}}), out3), GuardExceeded);
}

TEST_CASE("check report includes the budget when Z0 is supplied") {
  const json plain = run_check(resolve_config("check", nullptr, json::object()));
  CHECK(plain.at("conditions").at("mixing_bound").is_null());
  const json c = run_check(resolve_config("check", nullptr, {{"neg_log_posterior_z0", 50.0}, {"gamma0", 0.1}}));
  CHECK(c.at("conditions").at("mixing_bound").get<double>() ==
        doctest::Approx(mixing_budget(1000, 2, 0.1, 0.1, 1.0, 50.0, 0.05)));
  CHECK_THROWS_AS(run_check(resolve_config("check", nullptr, {{"graph", "only-graph.txt"}})), ConfigError);
  CHECK_THROWS_AS(run_check(resolve_config("check", nullptr, {{"alpha", 0.5}})), ConfigError);
}

TEST_CASE("generate then sample from files") {
  const auto dir = scratch("gen");
  OutputDir out(dir, false);
  run_generate(resolve_config("generate", nullptr, {{"n", 50}, {"p", 0.6}, {"q", 0.05}}), out);
  REQUIRE(fs::exists(dir / "graph.txt"));
  REQUIRE(fs::exists(dir / "truth.txt"));
  const auto sdir = scratch("sample");
  OutputDir sout(sdir, false);
  const json m = run_sample(resolve_config("sample", nullptr,
                                           {{"graph", (dir / "graph.txt").string()},
                                            {"truth", (dir / "truth.txt").string()},
                                            {"chains", 2},
                                            {"iters", 500}}),
                            sout);
  CHECK(fs::exists(sdir / "chain_00.csv"));
  CHECK(fs::exists(sdir / "chain_01.csv"));
  CHECK(m.contains("truth_log_posterior"));
  OutputDir s2(scratch("sample2"), false);
  CHECK_THROWS_AS(run_sample(resolve_config("sample", nullptr, json::object()), s2), ConfigError);
}
