#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qes/eval.hpp"
#include "qes/gradient.hpp"
#include "qes/lattice.hpp"

namespace qes {

enum class UpdateMode {
  full_residual,
  stateless_replay,
  naive_round,
  naive_stochastic_round,
  continuous_es,
};

UpdateMode parse_update_mode(std::string_view name);
std::string_view to_string(UpdateMode mode);

/// Truncation bound on gamma^K above which stateless replay warns.
inline constexpr double kTruncationWarnBound = 1e-2;

struct OptimizerConfig {
  double alpha = 1.0;
  double gamma = 0.9;
  double sigma = 1.0;
  std::size_t population = 16;
  std::size_t window = 50;
  UpdateMode mode = UpdateMode::stateless_replay;
  FitnessShaping shaping = FitnessShaping::zscore;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  /// Set when stateless replay truncates a non-negligible tail (gamma^K > bound).
  std::optional<std::string> truncation_warning() const;
};

/// Round half away from zero, so |u| >= 0.5 always moves.
inline Level round_update(double u) noexcept { return static_cast<Level>(std::round(u)); }

/// u = alpha * g + gamma * e; shared by the live and replayed recursions so
/// both produce identical bits.
inline double accumulate_update(double alpha, double gradient, double gamma,
                                double residual) noexcept {
  return alpha * gradient + gamma * residual;
}

struct ResidualState {
  std::vector<double> residual;

  static ResidualState zeros(std::size_t dimension) {
    return ResidualState{std::vector<double>(dimension, 0.0)};
  }
};

/// Outcome of one committed update.
struct StepOutcome {
  std::vector<Level> attempted;  // Round(u) before gating
  GatedDelta gated;              // what landed
};

struct GenerationRecord {
  std::uint64_t generation = 0;
  std::vector<std::uint64_t> member_seeds;
  std::vector<double> fitness;  // post-normalization

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

/// FIFO of the last `capacity` generation records, oldest first.
class HistoryWindow {
 public:
  explicit HistoryWindow(std::size_t capacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  /// Appends, evicting the oldest record when full. Generations must increase.
  void push(GenerationRecord record);

  const std::deque<GenerationRecord>& records() const noexcept { return records_; }

  friend bool operator==(const HistoryWindow&, const HistoryWindow&) = default;

 private:
  std::size_t capacity_;
  std::deque<GenerationRecord> records_;
};

/// Alg. "accumulated error feedback": u = alpha g + gamma e, dW = Round(u),
/// gate, commit, e' = u - applied.
StepOutcome step_full_residual(QuantLattice& lattice, ResidualState& state,
                               std::span<const double> gradient, const OptimizerConfig& cfg);

/// Re-simulates the residual recursion over `history` from a zero state,
/// gating each replayed step against the current weights. Weights untouched.
std::vector<double> rematerialize_residual(const QuantLattice& lattice,
                                           const HistoryWindow& history,
                                           const OptimizerConfig& cfg);

/// Optional outputs of step_stateless.
struct StatelessProbe {
  std::vector<double>* residual = nullptr;  // receives u - applied
  double* replay_ms = nullptr;              // receives rematerialization wall time
};

/// One stateless update: rematerialize, add the new generation's gradient,
/// round, gate, commit, enqueue. Nothing dense is kept between calls.
StepOutcome step_stateless(QuantLattice& lattice, HistoryWindow& history,
                           std::uint64_t generation, std::span<const std::uint64_t> new_seeds,
                           std::span<const double> new_fitness, const OptimizerConfig& cfg,
                           StatelessProbe probe = {});

/// Residual-free baselines. naive_stochastic_round consumes uniforms from
/// `rounding_seed`'s stream, one per element.
StepOutcome step_naive(QuantLattice& lattice, std::span<const double> gradient,
                       const OptimizerConfig& cfg, std::uint64_t rounding_seed);

/// Per-generation metrics.
struct GenerationReport {
  std::uint64_t generation = 0;
  double mean_reward = 0.0;
  double best_reward = 0.0;
  double fitness_std = 0.0;  // population std of raw rewards
  double update_ratio = 0.0;
  double hit_ratio = 0.0;
  double residual_linf = 0.0;
  double theta_deviation_linf = 0.0;  // NaN unless instrumented
  double replay_ms = 0.0;             // 0 unless timing is enabled
  double step_linf = 0.0;             // ||alpha g||_inf, not written to CSV
  std::size_t gated_count = 0;        // not written to CSV
};

struct RunOptions {
  std::uint64_t master_seed = 0;
  std::uint64_t eval_seed = 0;
  unsigned workers = 0;
  /// Keep the shadow high-precision trajectory (O(d) extra state).
  bool instrument = false;
  /// Measure rematerialization wall time into replay_ms.
  bool record_timing = false;
  /// Keep a copy of the weights after every generation.
  bool record_weights = false;
};

/// Shadow accumulators kept only when instrumented.
struct Instrumentation {
  std::vector<Level> initial_weights;
  std::vector<double> ideal_sum;  // sum_t alpha g_t
  std::vector<double> xi_sum;     // sum_t (applied_t - alpha g_t)
};

/// Drives one optimization run generation by generation.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, QuantLattice initial, const FitnessTask& task, RunOptions options);

  GenerationReport step();

  std::uint64_t generation() const noexcept { return generation_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }
  const RunOptions& options() const noexcept { return options_; }
  const QuantLattice& lattice() const noexcept { return lattice_; }
  const HistoryWindow& history() const noexcept { return history_; }
  /// Dense residual of full_residual mode; empty otherwise.
  std::span<const double> residual() const noexcept { return residual_.residual; }
  /// Real parameters of continuous_es mode, in lattice units; empty otherwise.
  std::span<const double> continuous_parameters() const noexcept { return continuous_; }
  const std::optional<Instrumentation>& instrumentation() const noexcept { return shadow_; }
  const std::vector<double>& last_gradient() const noexcept { return last_gradient_; }

  /// Reward of the current center (unperturbed weights).
  double center_reward() const;

 private:
  GenerationReport step_continuous(std::span<const std::uint64_t> seeds);

  OptimizerConfig cfg_;
  QuantLattice lattice_;
  const FitnessTask& task_;
  RunOptions options_;
  std::uint64_t generation_ = 0;
  ResidualState residual_;
  HistoryWindow history_;
  std::vector<double> continuous_;
  std::vector<double> last_gradient_;
  std::optional<Instrumentation> shadow_;
};

struct RunResult {
  std::vector<GenerationReport> reports;
  QuantLattice final_lattice;
  HistoryWindow history;
  std::vector<double> residual;
  std::vector<double> continuous_parameters;
  std::optional<Instrumentation> instrumentation;
  std::vector<std::vector<Level>> weight_trajectory;  // when record_weights
  double initial_reward = 0.0;
  double final_reward = 0.0;
  OptimizerConfig config;
  RunOptions options;
};

/// T generations: seeds -> perturb -> gate -> evaluate -> normalize -> update.
/// Deterministic in (cfg, initial, options.master_seed, options.eval_seed).
RunResult run(const OptimizerConfig& cfg, const QuantLattice& initial, const FitnessTask& task,
              std::size_t generations, const RunOptions& options);

}  // namespace qes
