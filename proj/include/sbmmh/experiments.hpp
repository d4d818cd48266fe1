#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sbmmh/analysis.hpp"
#include "sbmmh/graph.hpp"
#include "sbmmh/init.hpp"
#include "sbmmh/posterior.hpp"
#include "sbmmh/sampler.hpp"

namespace sbm::experiments {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolName = "sbmmh";
inline constexpr const char* kToolVersion = "0.1.0";

// Tolerance for tagging a chain as having reached the truth log posterior.
inline constexpr double kConvergedTolerance = 1e-6;

/// Default configuration of every command, as JSON. Config files and flags
/// are merged on top of these; keys absent from the defaults are rejected.
json default_config(const std::string& command);

// Shallow-merges `overrides` into `base` after checking every key exists in
// `base`. Throws ConfigError naming the offending key otherwise.
void merge_config(json& base, const json& overrides, const std::string& where);

// Reads a JSON object from a file (ConfigError on parse failure).
json read_config_file(const std::string& path);

// defaults <- [paper-scale sizes when requested] <- file <- flags.
json resolve_config(const std::string& command, const json& file, const json& flags);

/// Iteration budget: a fixed count or "auto" (the mixing-time budget).
struct Budget {
  std::optional<std::uint64_t> fixed;
  bool automatic = false;
};
Budget parse_budget(const json& value);

/// Output directory guard: refuses to overwrite existing files unless forced.
class OutputDir {
 public:
  OutputDir(std::filesystem::path root, bool force);

  // Path for a file inside the directory; throws ConfigError when it exists
  // already and force is off. Creates parent directories.
  std::filesystem::path claim(const std::string& relative);
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  bool force_;
};

void write_json_file(const std::filesystem::path& path, const json& j);

// Runs f(i) for i in [0, count) on `workers` threads (0 = hardware
// concurrency). Results are written by index, so ordering never depends on
// scheduling. The first exception is rethrown after all workers stop.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& f);

/// Per-chain outcome recorded in manifests.
struct ChainSummary {
  std::size_t index = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t chain_seed = 0;
  double init_loss = 0.0;
  double init_log_posterior = 0.0;
  double final_loss = 0.0;
  double final_log_posterior = 0.0;
  std::optional<std::uint64_t> hitting_time;
  std::uint64_t iterations = 0;
  std::uint64_t accepted = 0;
  bool reached_truth = false;  // final log posterior >= truth - kConvergedTolerance
  double seconds = 0.0;
  std::string trajectory_file;
};

json to_json(const ChainSummary& s);

// Manifest skeleton: schema version, tool, command, resolved config.
json manifest_header(const std::string& command, const json& resolved);

// Each driver writes its outputs below out and returns the manifest it wrote.
json run_balanced(const json& config, OutputDir& out);
json run_heterogeneous(const json& config, OutputDir& out);
json run_bad_init(const json& config, OutputDir& out);
json run_phase_heatmap(const json& config, OutputDir& out);
json run_exact(const json& config, OutputDir& out);
json run_check(const json& config);
json run_generate(const json& config, OutputDir& out);
json run_sample(const json& config, OutputDir& out);

// Fixed 4 x 4 connectivity of the heterogeneous study.
ConnectivityMatrix heterogeneous_connectivity();

// Community sizes proportional to `ratio` summing to n (largest remainder).
std::vector<int> proportional_sizes(int n, const std::vector<int>& ratio);

// Grid cell summary of the phase-heatmap study.
struct HeatmapCell {
  double a = 0.0, b = 0.0;  // p = a log n / n, q = b log n / n
  double p = 0.0, q = 0.0;
  double nI = 0.0;
  double nI_over_logn = 0.0;
  bool above_limit = false;  // nI > 2 log n
  bool skipped = false;      // p <= q or p >= 1
  int replicates = 0;
  double mean_misclassified = 0.0;
  std::vector<double> misclassified;
};

void write_heatmap_csv(std::ostream& out, const std::vector<HeatmapCell>& cells);

// Mean misclassification per bin of nI/log n (width `width`, last bin open).
struct HeatmapBin {
  double lower = 0.0;
  double upper = 0.0;  // infinity for the last bin
  int cells = 0;
  double mean_misclassified = 0.0;
};
std::vector<HeatmapBin> bin_heatmap(const std::vector<HeatmapCell>& cells, double width, double last_lower);

}  // namespace sbm::experiments
