#include "qes/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qes/error.hpp"

namespace qes {

double update_ratio(std::span<const Level> applied, std::size_t dimension) {
  if (dimension == 0) return 0.0;
  const auto changed = std::count_if(applied.begin(), applied.end(), [](Level v) { return v != 0; });
  return static_cast<double>(changed) / static_cast<double>(dimension);
}

double boundary_hit_ratio(std::span<const Level> attempted, const std::vector<bool>& gated_mask) {
  if (gated_mask.size() != attempted.size()) {
    throw DimensionError::mismatch("boundary_hit_ratio mask", attempted.size(), gated_mask.size());
  }
  std::size_t tries = 0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < attempted.size(); ++j) {
    if (attempted[j] == 0) continue;
    ++tries;
    hits += gated_mask[j] ? 1 : 0;
  }
  return tries == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(tries);
}

double theta_deviation_linf(std::span<const Level> initial, std::span<const Level> current,
                            std::span<const double> residual, std::span<const double> ideal_sum) {
  const std::size_t d = initial.size();
  if (current.size() != d) throw DimensionError::mismatch("theta current", d, current.size());
  if (ideal_sum.size() != d) throw DimensionError::mismatch("theta ideal_sum", d, ideal_sum.size());
  if (!residual.empty() && residual.size() != d) {
    throw DimensionError::mismatch("theta residual", d, residual.size());
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double e = residual.empty() ? 0.0 : residual[j];
    const double offset = static_cast<double>(current[j] - initial[j]);
    worst = std::max(worst, std::abs(offset + e - ideal_sum[j]));
  }
  return worst;
}

TrajectoryDiagnostics trajectory_diagnostics(std::span<const Level> initial,
                                             std::span<const Level> current,
                                             std::span<const double> residual,
                                             std::span<const double> ideal_sum) {
  TrajectoryDiagnostics out;
  out.theta_deviation_linf = theta_deviation_linf(initial, current, residual, ideal_sum);
  out.weight_deviation_linf = theta_deviation_linf(initial, current, {}, ideal_sum);
  const std::size_t d = initial.size();
  out.theta.resize(d);
  out.ideal_theta.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.theta[j] = static_cast<double>(current[j]) + (residual.empty() ? 0.0 : residual[j]);
    out.ideal_theta[j] = static_cast<double>(initial[j]) + ideal_sum[j];
  }
  return out;
}

NaiveDecomposition decompose_naive_trajectory(const RunResult& run) {
  const auto mode = run.config.mode;
  if (mode != UpdateMode::naive_round && mode != UpdateMode::naive_stochastic_round) {
    throw ConfigError("decompose_naive_trajectory needs a naive-mode run, got " +
                      std::string(to_string(mode)));
  }
  if (!run.instrumentation) throw ConfigError("decompose_naive_trajectory needs an instrumented run");
  const auto& shadow = *run.instrumentation;
  NaiveDecomposition out{shadow.ideal_sum, shadow.xi_sum, {}};
  const auto final_w = run.final_lattice.weights();
  out.displacement.resize(final_w.size());
  for (std::size_t j = 0; j < final_w.size(); ++j) {
    out.displacement[j] = final_w[j] - shadow.initial_weights[j];
  }
  return out;
}

std::vector<DivergenceStat> replay_divergence(const RunResult& full, const RunResult& stateless) {
  if (full.config.mode != UpdateMode::full_residual ||
      stateless.config.mode != UpdateMode::stateless_replay) {
    throw ConfigError("replay_divergence expects (full_residual, stateless_replay) runs");
  }
  const auto& a = full.config;
  const auto& b = stateless.config;
  if (a.alpha != b.alpha || a.gamma != b.gamma || a.sigma != b.sigma ||
      a.population != b.population || a.shaping != b.shaping) {
    throw ConfigError("replay_divergence: runs differ in more than the update mode");
  }
  if (full.options.master_seed != stateless.options.master_seed ||
      full.options.eval_seed != stateless.options.eval_seed) {
    throw ConfigError("replay_divergence: runs use different seeds");
  }
  if (full.weight_trajectory.size() != stateless.weight_trajectory.size()) {
    throw DimensionError::mismatch("replay_divergence generations", full.weight_trajectory.size(),
                                   stateless.weight_trajectory.size());
  }
  std::vector<DivergenceStat> out;
  out.reserve(full.weight_trajectory.size());
  for (std::size_t t = 0; t < full.weight_trajectory.size(); ++t) {
    const auto& wa = full.weight_trajectory[t];
    const auto& wb = stateless.weight_trajectory[t];
    if (wa.size() != wb.size()) throw DimensionError::mismatch("replay_divergence weights", wa.size(), wb.size());
    DivergenceStat stat{t, 0, 0};
    for (std::size_t j = 0; j < wa.size(); ++j) {
      const Level diff = wa[j] > wb[j] ? wa[j] - wb[j] : wb[j] - wa[j];
      if (diff != 0) ++stat.differing;
      stat.max_abs_diff = std::max(stat.max_abs_diff, diff);
    }
    out.push_back(stat);
  }
  return out;
}

LinearFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError::mismatch("fit_line", xs.size(), ys.size());
  if (xs.size() < 2) throw ConfigError("fit_line needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_line needs distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

LinearFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!(xs[k] > 0.0) || (k < ys.size() && !(ys[k] > 0.0))) {
      throw ConfigError("fit_power_law needs positive data");
    }
    lx[k] = std::log(xs[k]);
  }
  for (std::size_t k = 0; k < ys.size(); ++k) ly[k] = std::log(ys[k]);
  return fit_line(lx, ly);
}

TrajectorySummary summarize(std::span<const GenerationReport> reports) {
  TrajectorySummary s;
  s.generations = reports.size();
  if (reports.empty()) return s;
  s.first_mean_reward = reports.front().mean_reward;
  s.last_mean_reward = reports.back().mean_reward;
  s.best_reward = -std::numeric_limits<double>::infinity();
  bool instrumented = true;
  double theta = 0.0;
  for (const auto& r : reports) {
    s.best_reward = std::max(s.best_reward, r.best_reward);
    s.mean_update_ratio += r.update_ratio;
    s.mean_hit_ratio += r.hit_ratio;
    s.max_residual_linf = std::max(s.max_residual_linf, r.residual_linf);
    s.total_replay_ms += r.replay_ms;
    if (std::isnan(r.theta_deviation_linf)) {
      instrumented = false;
    } else {
      theta = std::max(theta, r.theta_deviation_linf);
    }
  }
  const double n = static_cast<double>(reports.size());
  s.mean_update_ratio /= n;
  s.mean_hit_ratio /= n;
  s.max_theta_deviation_linf = instrumented ? theta : std::numeric_limits<double>::quiet_NaN();
  return s;
}

}  // namespace qes
