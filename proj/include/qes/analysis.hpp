#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qes/lattice.hpp"
#include "qes/optimizer.hpp"

namespace qes {

/// Fraction of the d parameters changed by an update.
double update_ratio(std::span<const Level> applied, std::size_t dimension);
inline double update_ratio(const GatedDelta& delta) {
  return update_ratio(delta.applied, delta.applied.size());
}

/// Among nonzero attempted moves, the fraction suppressed by gating. 0 when
/// nothing was attempted.
double boundary_hit_ratio(std::span<const Level> attempted, const std::vector<bool>& gated_mask);

/// Virtual continuous parameters Theta = W + e against the ideal trajectory
/// Theta_0 + sum alpha g. Deviations are formed from offsets to W_0 so that
/// large codebook levels do not cost precision.
struct TrajectoryDiagnostics {
  std::vector<double> theta;
  std::vector<double> ideal_theta;
  double theta_deviation_linf = 0.0;   // ||Theta_t - ideal||_inf
  double weight_deviation_linf = 0.0;  // ||W_t - ideal||_inf
};

TrajectoryDiagnostics trajectory_diagnostics(std::span<const Level> initial,
                                             std::span<const Level> current,
                                             std::span<const double> residual,
                                             std::span<const double> ideal_sum);

/// ||(W - W_0) + e - ideal_sum||_inf without materializing Theta. An empty
/// residual is treated as zero.
double theta_deviation_linf(std::span<const Level> initial, std::span<const Level> current,
                            std::span<const double> residual, std::span<const double> ideal_sum);

/// W_T - W_0 split into sum alpha g_t and sum xi_t, xi_t = applied_t - alpha g_t.
struct NaiveDecomposition {
  std::vector<double> ideal_sum;
  std::vector<double> accumulated_xi;
  std::vector<Level> displacement;  // W_T - W_0
};

/// Requires an instrumented run in naive_round or naive_stochastic_round mode.
NaiveDecomposition decompose_naive_trajectory(const RunResult& run);

struct DivergenceStat {
  std::uint64_t generation = 0;
  std::size_t differing = 0;  // entries with W_full != W_stateless
  Level max_abs_diff = 0;
};

/// Per-generation difference between a full_residual and a stateless_replay
/// run sharing seeds, task and every other hyperparameter. Both runs must have
/// been recorded with record_weights.
std::vector<DivergenceStat> replay_divergence(const RunResult& full, const RunResult& stateless);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit fit_line(std::span<const double> xs, std::span<const double> ys);

/// Fits y = c * x^p on log-log axes; slope is the exponent p.
LinearFit fit_power_law(std::span<const double> xs, std::span<const double> ys);

/// Aggregates over a trajectory, recomputable from a persisted CSV.
struct TrajectorySummary {
  std::size_t generations = 0;
  double first_mean_reward = 0.0;
  double last_mean_reward = 0.0;
  double best_reward = 0.0;
  double mean_update_ratio = 0.0;
  double mean_hit_ratio = 0.0;
  double max_residual_linf = 0.0;
  double max_theta_deviation_linf = 0.0;  // NaN when not instrumented
  double total_replay_ms = 0.0;
};

TrajectorySummary summarize(std::span<const GenerationReport> reports);

}  // namespace qes
