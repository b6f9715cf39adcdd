#include "qes/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qes/analysis.hpp"
#include "qes/error.hpp"
#include "qes/perturb.hpp"

namespace qes {

namespace {

void check_length(const char* what, std::size_t expected, std::size_t got) {
  if (expected != got) throw DimensionError::mismatch(what, expected, got);
}

double linf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Rounds u, gates against the lattice, commits, and leaves u - applied in
/// `residual_out`. `u` holds the already accumulated update.
StepOutcome commit_rounded(QuantLattice& lattice, std::span<const double> u,
                           std::span<double> residual_out) {
  const std::size_t d = lattice.dimension();
  StepOutcome out;
  out.attempted.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.attempted[j] = round_update(u[j]);
  out.gated = gate_apply(lattice, out.attempted);
  lattice.commit(out.gated.applied);
  for (std::size_t j = 0; j < d; ++j) {
    residual_out[j] = u[j] - static_cast<double>(out.gated.applied[j]);
  }
  return out;
}

void fill_reward_stats(GenerationReport& report, std::span<const double> rewards) {
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  report.mean_reward = mean;
  report.best_reward = *std::max_element(rewards.begin(), rewards.end());
  report.fitness_std = std::sqrt(ss / n);
}

}  // namespace

UpdateMode parse_update_mode(std::string_view name) {
  if (name == "full_residual") return UpdateMode::full_residual;
  if (name == "stateless_replay") return UpdateMode::stateless_replay;
  if (name == "naive_round") return UpdateMode::naive_round;
  if (name == "naive_stochastic_round") return UpdateMode::naive_stochastic_round;
  if (name == "continuous_es") return UpdateMode::continuous_es;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(UpdateMode mode) {
  switch (mode) {
    case UpdateMode::full_residual: return "full_residual";
    case UpdateMode::stateless_replay: return "stateless_replay";
    case UpdateMode::naive_round: return "naive_round";
    case UpdateMode::naive_stochastic_round: return "naive_stochastic_round";
    case UpdateMode::continuous_es: return "continuous_es";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (population < 2) throw ConfigError("population must be at least 2");
  if (window < 1) throw ConfigError("window must be at least 1");
}

std::optional<std::string> OptimizerConfig::truncation_warning() const {
  if (mode != UpdateMode::stateless_replay) return std::nullopt;
  const double tail = std::pow(gamma, static_cast<double>(window));
  if (tail <= kTruncationWarnBound) return std::nullopt;
  std::ostringstream msg;
  msg << "gamma^K = " << tail << " exceeds " << kTruncationWarnBound
      << "; residual contributions older than the window are truncated";
  return msg.str();
}

HistoryWindow::HistoryWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ConfigError("history window must hold at least one record");
}

void HistoryWindow::push(GenerationRecord record) {
  check_length("history record fitness", record.member_seeds.size(), record.fitness.size());
  if (!records_.empty() && record.generation <= records_.back().generation) {
    throw ConfigError("history records must have increasing generations");
  }
  if (records_.size() == capacity_) records_.pop_front();
  records_.push_back(std::move(record));
}

StepOutcome step_full_residual(QuantLattice& lattice, ResidualState& state,
                               std::span<const double> gradient, const OptimizerConfig& cfg) {
  const std::size_t d = lattice.dimension();
  check_length("step_full_residual gradient", d, gradient.size());
  check_length("step_full_residual residual", d, state.residual.size());
  std::vector<double> u(d);
  for (std::size_t j = 0; j < d; ++j) {
    u[j] = accumulate_update(cfg.alpha, gradient[j], cfg.gamma, state.residual[j]);
  }
  return commit_rounded(lattice, u, state.residual);
}

std::vector<double> rematerialize_residual(const QuantLattice& lattice,
                                           const HistoryWindow& history,
                                           const OptimizerConfig& cfg) {
  const std::size_t d = lattice.dimension();
  const auto w = lattice.weights();
  std::vector<double> residual(d, 0.0);
  std::vector<double> gradient(d);
  for (const auto& record : history.records()) {
    estimate_gradient_into(record.member_seeds, record.fitness, cfg.sigma, gradient);
    for (std::size_t j = 0; j < d; ++j) {
      const double u = accumulate_update(cfg.alpha, gradient[j], cfg.gamma, residual[j]);
      const Level step = round_update(u);
      const Level landed = lattice.contains(w[j] + step) ? step : 0;
      residual[j] = u - static_cast<double>(landed);
    }
  }
  return residual;
}

StepOutcome step_stateless(QuantLattice& lattice, HistoryWindow& history,
                           std::uint64_t generation, std::span<const std::uint64_t> new_seeds,
                           std::span<const double> new_fitness, const OptimizerConfig& cfg,
                           StatelessProbe probe) {
  check_length("step_stateless fitness", new_seeds.size(), new_fitness.size());
  const std::size_t d = lattice.dimension();

  const auto started = std::chrono::steady_clock::now();
  std::vector<double> proxy = rematerialize_residual(lattice, history, cfg);
  if (probe.replay_ms) {
    *probe.replay_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  }

  const std::vector<double> gradient = estimate_gradient(new_seeds, new_fitness, cfg.sigma, d);
  std::vector<double> u(d);
  for (std::size_t j = 0; j < d; ++j) {
    u[j] = accumulate_update(cfg.alpha, gradient[j], cfg.gamma, proxy[j]);
  }
  StepOutcome out = commit_rounded(lattice, u, proxy);
  history.push(GenerationRecord{generation, {new_seeds.begin(), new_seeds.end()},
                                {new_fitness.begin(), new_fitness.end()}});
  if (probe.residual) *probe.residual = std::move(proxy);
  return out;
}

StepOutcome step_naive(QuantLattice& lattice, std::span<const double> gradient,
                       const OptimizerConfig& cfg, std::uint64_t rounding_seed) {
  const std::size_t d = lattice.dimension();
  check_length("step_naive gradient", d, gradient.size());
  StepOutcome out;
  out.attempted.resize(d);
  if (cfg.mode == UpdateMode::naive_round) {
    for (std::size_t j = 0; j < d; ++j) out.attempted[j] = round_update(cfg.alpha * gradient[j]);
  } else if (cfg.mode == UpdateMode::naive_stochastic_round) {
    const CounterStream stream(rounding_seed);
    for (std::size_t j = 0; j < d; ++j) {
      out.attempted[j] = stochastic_round(cfg.alpha * gradient[j], stream.uniform(j));
    }
  } else {
    throw ConfigError("step_naive called in mode " + std::string(to_string(cfg.mode)));
  }
  out.gated = gate_apply(lattice, out.attempted);
  lattice.commit(out.gated.applied);
  return out;
}

Optimizer::Optimizer(OptimizerConfig cfg, QuantLattice initial, const FitnessTask& task,
                     RunOptions options)
    : cfg_(cfg),
      lattice_(std::move(initial)),
      task_(task),
      options_(options),
      history_(cfg.window) {
  cfg_.validate();
  if (task_.dimension() != lattice_.dimension()) {
    throw DimensionError::mismatch("task dimension", lattice_.dimension(), task_.dimension());
  }
  const std::size_t d = lattice_.dimension();
  if (cfg_.mode == UpdateMode::full_residual) residual_ = ResidualState::zeros(d);
  if (cfg_.mode == UpdateMode::continuous_es) {
    const auto w = lattice_.weights();
    continuous_.assign(w.begin(), w.end());
  }
  if (options_.instrument) {
    const auto w = lattice_.weights();
    shadow_ = Instrumentation{{w.begin(), w.end()}, std::vector<double>(d, 0.0),
                              std::vector<double>(d, 0.0)};
  }
}

double Optimizer::center_reward() const {
  if (cfg_.mode != UpdateMode::continuous_es) {
    return evaluate_center(lattice_, task_, options_.eval_seed);
  }
  std::vector<double> params(continuous_.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    params[j] = lattice_.scale() * (continuous_[j] - static_cast<double>(lattice_.zero_point()));
  }
  return task_.evaluate(params, options_.eval_seed);
}

GenerationReport Optimizer::step() {
  const std::size_t n = cfg_.population;
  const std::size_t d = lattice_.dimension();
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) {
    seeds[i] = derive_member_seed(options_.master_seed, generation_, i);
  }
  if (cfg_.mode == UpdateMode::continuous_es) return step_continuous(seeds);

  const std::vector<double> rewards = evaluate_population(
      lattice_, seeds, task_, EvaluationOptions{cfg_.sigma, options_.eval_seed, options_.workers});
  const std::vector<double> fitness = normalize_rewards(rewards, cfg_.shaping);

  GenerationReport report;
  report.generation = generation_;
  fill_reward_stats(report, rewards);
  report.theta_deviation_linf = std::numeric_limits<double>::quiet_NaN();

  StepOutcome outcome;
  std::vector<double> transient_residual;
  switch (cfg_.mode) {
    case UpdateMode::full_residual:
      last_gradient_ = estimate_gradient(seeds, fitness, cfg_.sigma, d);
      outcome = step_full_residual(lattice_, residual_, last_gradient_, cfg_);
      report.residual_linf = linf(residual_.residual);
      break;
    case UpdateMode::stateless_replay: {
      double replay_ms = 0.0;
      StatelessProbe probe{&transient_residual, options_.record_timing ? &replay_ms : nullptr};
      if (options_.instrument) last_gradient_ = estimate_gradient(seeds, fitness, cfg_.sigma, d);
      outcome = step_stateless(lattice_, history_, generation_, seeds, fitness, cfg_, probe);
      report.residual_linf = linf(transient_residual);
      report.replay_ms = replay_ms;
      break;
    }
    case UpdateMode::naive_round:
    case UpdateMode::naive_stochastic_round:
      last_gradient_ = estimate_gradient(seeds, fitness, cfg_.sigma, d);
      outcome = step_naive(lattice_, last_gradient_, cfg_,
                           derive_update_seed(options_.master_seed, generation_));
      break;
    case UpdateMode::continuous_es:
      break;
  }

  report.update_ratio = update_ratio(outcome.gated);
  report.hit_ratio = boundary_hit_ratio(outcome.attempted, outcome.gated.gated_mask);
  report.gated_count = outcome.gated.gated_count();
  if (!last_gradient_.empty()) {
    double m = 0.0;
    for (double g : last_gradient_) m = std::max(m, std::abs(cfg_.alpha * g));
    report.step_linf = m;
  }

  if (shadow_) {
    for (std::size_t j = 0; j < d; ++j) {
      const double ideal_step = cfg_.alpha * last_gradient_[j];
      shadow_->ideal_sum[j] += ideal_step;
      shadow_->xi_sum[j] += static_cast<double>(outcome.gated.applied[j]) - ideal_step;
    }
    std::span<const double> e;
    if (cfg_.mode == UpdateMode::full_residual) e = residual_.residual;
    if (cfg_.mode == UpdateMode::stateless_replay) e = transient_residual;
    report.theta_deviation_linf =
        theta_deviation_linf(shadow_->initial_weights, lattice_.weights(), e, shadow_->ideal_sum);
  }
  ++generation_;
  return report;
}

GenerationReport Optimizer::step_continuous(std::span<const std::uint64_t> seeds) {
  const std::size_t n = seeds.size();
  const std::size_t d = continuous_.size();
  const double zp = static_cast<double>(lattice_.zero_point());
  std::vector<double> rewards(n);
  std::vector<double> params(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> eps = sample_noise(PerturbationDraw{seeds[i], cfg_.sigma, d});
    for (std::size_t j = 0; j < d; ++j) {
      params[j] = lattice_.scale() * (continuous_[j] + cfg_.sigma * eps[j] - zp);
    }
    try {
      rewards[i] = task_.evaluate(params, options_.eval_seed);
    } catch (const std::exception& e) {
      throw EvaluationError(i, e.what());
    }
  }
  const std::vector<double> fitness = normalize_rewards(rewards, cfg_.shaping);
  last_gradient_ = estimate_gradient_continuous(seeds, fitness, cfg_.sigma, d);

  GenerationReport report;
  report.generation = generation_;
  fill_reward_stats(report, rewards);
  report.theta_deviation_linf = std::numeric_limits<double>::quiet_NaN();

  std::size_t changed = 0;
  double step_linf = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double step = cfg_.alpha * last_gradient_[j];
    changed += step != 0.0 ? 1 : 0;
    step_linf = std::max(step_linf, std::abs(step));
    continuous_[j] += step;
    if (shadow_) shadow_->ideal_sum[j] += step;
  }
  report.update_ratio = d == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(d);
  report.step_linf = step_linf;
  if (shadow_) {
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double offset = continuous_[j] - static_cast<double>(shadow_->initial_weights[j]);
      worst = std::max(worst, std::abs(offset - shadow_->ideal_sum[j]));
    }
    report.theta_deviation_linf = worst;
  }
  ++generation_;
  return report;
}

RunResult run(const OptimizerConfig& cfg, const QuantLattice& initial, const FitnessTask& task,
              std::size_t generations, const RunOptions& options) {
  Optimizer opt(cfg, initial, task, options);
  RunResult result{{}, initial, HistoryWindow(cfg.window), {}, {}, std::nullopt, {}, 0.0, 0.0,
                   cfg, options};
  result.initial_reward = opt.center_reward();
  result.reports.reserve(generations);
  for (std::size_t t = 0; t < generations; ++t) {
    result.reports.push_back(opt.step());
    if (options.record_weights) {
      const auto w = opt.lattice().weights();
      result.weight_trajectory.emplace_back(w.begin(), w.end());
    }
  }
  result.final_reward = opt.center_reward();
  result.final_lattice = opt.lattice();
  result.history = opt.history();
  result.residual.assign(opt.residual().begin(), opt.residual().end());
  result.continuous_parameters.assign(opt.continuous_parameters().begin(),
                                      opt.continuous_parameters().end());
  result.instrumentation = opt.instrumentation();
  return result;
}

}  // namespace qes
