#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "qes/lattice.hpp"
#include "qes/optimizer.hpp"

namespace qes {

inline constexpr const char* kVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 1;
inline constexpr int runtime_failure = 2;
}  // namespace exit_code

/// Everything that determines a run. Required keys: task, mode, bits, alpha,
/// sigma, population, generations, master_seed. The remaining keys default as
/// in the member initializers below and are always written to the echo.
struct RunConfig {
  std::string task;
  nlohmann::json task_params = nlohmann::json::object();
  OptimizerConfig optimizer;
  int bits = 4;
  double scale = 1.0;
  Level zero_point = 0;
  /// Initial levels drawn uniformly from [init_low, init_high]; defaults to the
  /// whole codebook.
  std::optional<Level> init_low;
  std::optional<Level> init_high;
  std::size_t generations = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t dataset_seed = 0;
  std::uint64_t eval_seed = 0;
  std::string out_dir = "qes_out";
  bool instrument = false;
  bool record_timing = false;
  unsigned workers = 0;
};

/// Throws ConfigError naming the offending or missing field.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Seeded initial lattice sized for `dimension`.
QuantLattice initial_lattice(const RunConfig& cfg, std::size_t dimension);

/// Final state of one CLI run.
struct RunOutcome {
  double initial_reward = 0.0;
  double final_reward = 0.0;
  std::size_t completed = 0;
};

/// Runs `cfg` and writes config.json, trajectory.csv, checkpoint.{bin,json},
/// history.{json,bin} and diagnostics.json into cfg.out_dir. Partial outputs are
/// flushed before a mid-run failure is rethrown.
RunOutcome run_to_directory(const RunConfig& cfg);

struct SweepEntry {
  std::size_t window = 0;
  double gamma = 0.0;
};

struct SweepSpec {
  std::vector<SweepEntry> entries;
  std::vector<std::uint64_t> seeds;  // empty: the base config's master_seed
};

SweepSpec parse_sweep_spec(const nlohmann::json& doc);

/// Runs every (entry, seed) pair into out_dir/runs/ and writes summary.csv
/// (window, gamma, runs, final_reward_mean, final_reward_std) and runs.csv.
void run_ablation(const RunConfig& base, const SweepSpec& sweep, const std::filesystem::path& out_dir);

/// `qes run ...` / `qes ablate ...`; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace qes
