#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "qes/analysis.hpp"
#include "qes/error.hpp"
#include "qes/io.hpp"
#include "qes/optimizer.hpp"

using namespace qes;

namespace {

OptimizerConfig config(UpdateMode mode, double alpha, double gamma, double sigma = 1.0,
                       std::size_t population = 8, std::size_t window = 50) {
  OptimizerConfig cfg;
  cfg.mode = mode;
  cfg.alpha = alpha;
  cfg.gamma = gamma;
  cfg.sigma = sigma;
  cfg.population = population;
  cfg.window = window;
  return cfg;
}

std::vector<std::uint64_t> generation_seeds(std::uint64_t master, std::uint64_t t, std::size_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = derive_member_seed(master, t, i);
  return s;
}

std::vector<double> random_fitness(std::uint64_t seed, std::size_t n) {
  const CounterStream stream(seed);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = stream.uniform(i);
  return normalize_rewards(r);
}

QuadraticTask quadratic(std::size_t d, double target) {
  return QuadraticTask(std::vector<double>(d, target));
}

}  // namespace

TEST_CASE("residual accumulates until the rounding threshold") {
  QuantLattice lat({7}, 4);
  auto state = ResidualState::zeros(1);
  const auto cfg = config(UpdateMode::full_residual, 1.0, 0.9);
  const std::vector<double> g{0.3};

  auto first = step_full_residual(lat, state, g, cfg);
  CHECK(first.attempted[0] == 0);
  CHECK(lat[0] == 7);
  CHECK(state.residual[0] == doctest::Approx(0.3));

  auto second = step_full_residual(lat, state, g, cfg);
  CHECK(second.attempted[0] == 1);
  CHECK(second.gated.applied[0] == 1);
  CHECK(lat[0] == 8);
  CHECK(state.residual[0] == doctest::Approx(-0.43));
}

TEST_CASE("gated move keeps the whole update in the residual") {
  // Hand trace, one parameter at the top of a 4-bit codebook:
  // t0: u = 0.3          -> no move, e = 0.3
  // t1: u = 0.3 + 0.27   -> Round = +1, gated, e = 0.57
  QuantLattice lat({15}, 4);
  auto state = ResidualState::zeros(1);
  const auto cfg = config(UpdateMode::full_residual, 1.0, 0.9);
  const std::vector<double> g{0.3};
  step_full_residual(lat, state, g, cfg);
  auto out = step_full_residual(lat, state, g, cfg);
  CHECK(out.attempted[0] == 1);
  CHECK(out.gated.applied[0] == 0);
  CHECK(out.gated.gated_mask[0]);
  CHECK(lat[0] == 15);
  CHECK(state.residual[0] == doctest::Approx(0.57));
}

TEST_CASE("round half away from zero") {
  CHECK(round_update(0.5) == 1);
  CHECK(round_update(-0.5) == -1);
  CHECK(round_update(0.4999999) == 0);
  CHECK(round_update(1.5) == 2);
  CHECK(round_update(2.5) == 3);
}

TEST_CASE("full residual step rejects mismatched lengths") {
  QuantLattice lat({7, 7}, 4);
  auto state = ResidualState::zeros(2);
  const std::vector<double> g{0.1};
  CHECK_THROWS_AS(step_full_residual(lat, state, g, config(UpdateMode::full_residual, 1, 1)),
                  DimensionError);
}

TEST_CASE("empty history rematerializes to zero") {
  const QuantLattice lat = QuantLattice::filled(10, 100, 8);
  const HistoryWindow h(5);
  CHECK(rematerialize_residual(lat, h, config(UpdateMode::stateless_replay, 1, 0.9)) ==
        std::vector<double>(10, 0.0));
}

TEST_CASE("history window is a bounded FIFO") {
  HistoryWindow h(3);
  for (std::uint64_t t = 0; t < 5; ++t) h.push(GenerationRecord{t, {t}, {0.0}});
  REQUIRE(h.size() == 3);
  CHECK(h.records().front().generation == 2);
  CHECK(h.records().back().generation == 4);
  CHECK_THROWS(h.push(GenerationRecord{4, {1}, {0.0}}));
  CHECK_THROWS(h.push(GenerationRecord{9, {1, 2}, {0.0}}));
  CHECK_THROWS(HistoryWindow(0));
}

TEST_CASE("stateless step at generation 0 equals a full residual step from zero") {
  const std::size_t d = 40;
  const auto cfg = config(UpdateMode::stateless_replay, 2.0, 0.9, 1.0, 8);
  const auto seeds = generation_seeds(5, 0, 8);
  const auto fitness = random_fitness(5, 8);

  QuantLattice a = QuantLattice::filled(d, 128, 8);
  QuantLattice b = a;
  HistoryWindow h(cfg.window);
  std::vector<double> e_stateless;
  const auto sa = step_stateless(a, h, 0, seeds, fitness, cfg, {&e_stateless, nullptr});

  auto state = ResidualState::zeros(d);
  const auto g = estimate_gradient(seeds, fitness, cfg.sigma, d);
  const auto sb = step_full_residual(b, state, g, cfg);
  CHECK(a == b);
  CHECK(sa.gated.applied == sb.gated.applied);
  CHECK(e_stateless == state.residual);
  CHECK(h.size() == 1);
}

TEST_CASE("replay with full coverage reproduces the live residual bit for bit") {
  const std::size_t d = 64;
  const std::size_t n = 8;
  const std::size_t steps = 30;
  for (double gamma : {1.0, 0.9}) {
    const auto cfg = config(UpdateMode::full_residual, 3.0, gamma, 1.0, n, steps);
    QuantLattice lat = QuantLattice::filled(d, 1000, 12);
    auto state = ResidualState::zeros(d);
    HistoryWindow h(steps);
    for (std::uint64_t t = 0; t < steps; ++t) {
      const auto seeds = generation_seeds(11, t, n);
      const auto fitness = random_fitness(100 + t, n);
      const auto g = estimate_gradient(seeds, fitness, cfg.sigma, d);
      const auto out = step_full_residual(lat, state, g, cfg);
      REQUIRE(out.gated.gated_count() == 0);
      h.push(GenerationRecord{t, seeds, fitness});
      CHECK(rematerialize_residual(lat, h, cfg) == state.residual);
    }
  }
}

TEST_CASE("truncated replay forgets old steps as the window grows") {
  // Replaying K steps from zero leaves gamma^K * e_{t-K} where no rounding
  // decision flips; a flip moves that coordinate by up to one grid step,
  // which then decays by gamma per step.
  const std::size_t d = 2000;
  const std::size_t n = 8;
  const std::size_t steps = 120;
  auto cfg = config(UpdateMode::full_residual, 0.3, 0.9, 1.0, n, steps);
  QuantLattice lat = QuantLattice::filled(d, 1000, 12);
  auto state = ResidualState::zeros(d);
  std::vector<GenerationRecord> records;
  for (std::uint64_t t = 0; t < steps; ++t) {
    const auto seeds = generation_seeds(21, t, n);
    const auto fitness = random_fitness(500 + t, n);
    step_full_residual(lat, state, estimate_gradient(seeds, fitness, cfg.sigma, d), cfg);
    records.push_back(GenerationRecord{t, seeds, fitness});
  }
  double previous = 1.0;
  for (std::size_t window : {10u, 30u, 50u, 80u}) {
    cfg.window = window;
    HistoryWindow h(window);
    for (const auto& r : records) h.push(r);
    const auto proxy = rematerialize_residual(lat, h, cfg);
    const double envelope = 0.5 * std::pow(cfg.gamma, static_cast<double>(window)) + 1e-12;
    double mean_abs = 0.0;
    std::size_t within = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = std::abs(proxy[j] - state.residual[j]);
      mean_abs += diff / static_cast<double>(d);
      within += diff <= envelope ? 1 : 0;
    }
    MESSAGE("K=" << window << " mean |e~ - e| = " << mean_abs << ", within envelope " << within << "/" << d);
    CHECK(mean_abs < previous);
    CHECK(within * 2 > d);
    previous = mean_abs;
  }
}

TEST_CASE("naive rounding stagnates below half a step") {
  QuantLattice lat = QuantLattice::filled(5, 7, 4);
  const std::vector<double> g{0.3, -0.3, 0.1, -0.49, 0.0};
  const auto out = step_naive(lat, g, config(UpdateMode::naive_round, 1.0, 0.9), 0);
  CHECK(out.gated.applied == std::vector<Level>(5, 0));
  CHECK(lat == QuantLattice::filled(5, 7, 4));
}

TEST_CASE("naive stochastic rounding is unbiased with positive variance") {
  const auto cfg = config(UpdateMode::naive_stochastic_round, 1.0, 0.9);
  const std::vector<double> g{0.3, -0.3};
  constexpr int kTrials = 10'000;
  std::vector<double> sum(2, 0.0), sq(2, 0.0);
  for (int k = 0; k < kTrials; ++k) {
    QuantLattice lat = QuantLattice::filled(2, 7, 4);
    const auto out = step_naive(lat, g, cfg, derive_update_seed(3, k));
    for (std::size_t j = 0; j < 2; ++j) {
      const double v = static_cast<double>(out.gated.applied[j]);
      sum[j] += v;
      sq[j] += v * v;
    }
  }
  for (std::size_t j = 0; j < 2; ++j) {
    const double mean = sum[j] / kTrials;
    const double var = sq[j] / kTrials - mean * mean;
    CHECK(var > 0.0);
    CHECK(std::abs(mean - g[j]) <= 3.0 * std::sqrt(var / kTrials));
  }
}

TEST_CASE("zero gradient never moves naive updates") {
  const std::vector<double> g(6, 0.0);
  for (auto mode : {UpdateMode::naive_round, UpdateMode::naive_stochastic_round}) {
    QuantLattice lat = QuantLattice::filled(6, 3, 4);
    const auto out = step_naive(lat, g, config(mode, 1.0, 0.9), 17);
    CHECK(out.gated.applied == std::vector<Level>(6, 0));
  }
  QuantLattice lat = QuantLattice::filled(6, 3, 4);
  CHECK_THROWS(step_naive(lat, g, config(UpdateMode::full_residual, 1.0, 0.9), 0));
}

TEST_CASE("config validation and truncation warning") {
  CHECK_THROWS(config(UpdateMode::full_residual, 0.0, 0.9).validate());
  CHECK_THROWS(config(UpdateMode::full_residual, 1.0, 0.0).validate());
  CHECK_THROWS(config(UpdateMode::full_residual, 1.0, 1.1).validate());
  CHECK_THROWS(config(UpdateMode::full_residual, 1.0, 0.9, -1.0).validate());
  CHECK_THROWS(config(UpdateMode::full_residual, 1.0, 0.9, 1.0, 1).validate());
  CHECK_NOTHROW(config(UpdateMode::full_residual, 1.0, 1.0).validate());

  CHECK_FALSE(config(UpdateMode::stateless_replay, 1, 0.9, 1, 8, 50).truncation_warning());
  CHECK(config(UpdateMode::stateless_replay, 1, 0.9, 1, 8, 10).truncation_warning());
  CHECK_FALSE(config(UpdateMode::full_residual, 1, 0.9, 1, 8, 10).truncation_warning());
  CHECK_FALSE(config(UpdateMode::stateless_replay, 1, 0.58, 1, 8, 10).truncation_warning());
}

TEST_CASE("runs are deterministic") {
  const auto task = quadratic(16, 0.5);
  const QuantLattice init = QuantLattice::filled(16, 100, 8, 0.01, 128);
  for (auto mode : {UpdateMode::full_residual, UpdateMode::stateless_replay, UpdateMode::naive_round,
                    UpdateMode::naive_stochastic_round, UpdateMode::continuous_es}) {
    const auto cfg = config(mode, 0.5, 0.9, 1.0, 8, 10);
    RunOptions opt;
    opt.master_seed = 99;
    const auto a = run(cfg, init, task, 25, opt);
    const auto b = run(cfg, init, task, 25, opt);
    CHECK(a.final_lattice == b.final_lattice);
    CHECK(a.final_reward == b.final_reward);
    CHECK(a.continuous_parameters == b.continuous_parameters);
    for (std::size_t t = 0; t < a.reports.size(); ++t) {
      CHECK(a.reports[t].mean_reward == b.reports[t].mean_reward);
      CHECK(a.reports[t].residual_linf == b.reports[t].residual_linf);
    }
  }
}

TEST_CASE("continuous ES applies W <- W + alpha g") {
  const std::size_t d = 6;
  const auto task = quadratic(d, 0.2);
  const QuantLattice init = QuantLattice::filled(d, 8, 4, 0.1, 8);
  const auto cfg = config(UpdateMode::continuous_es, 0.05, 0.9, 0.7, 10);
  RunOptions options;
  options.master_seed = 4;
  Optimizer opt(cfg, init, task, options);
  for (int t = 0; t < 5; ++t) {
    const std::vector<double> before(opt.continuous_parameters().begin(),
                                     opt.continuous_parameters().end());
    const auto seeds = generation_seeds(4, opt.generation(), cfg.population);
    std::vector<double> rewards(cfg.population);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto eps = sample_noise(PerturbationDraw{seeds[i], cfg.sigma, d});
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = 0.1 * (before[j] + cfg.sigma * eps[j] - 8.0);
      rewards[i] = task.evaluate(x, 0);
    }
    const auto g = estimate_gradient_continuous(seeds, normalize_rewards(rewards), cfg.sigma, d);
    opt.step();
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(opt.continuous_parameters()[j] == doctest::Approx(before[j] + cfg.alpha * g[j]).epsilon(1e-14));
    }
  }
  CHECK(opt.lattice() == init);
}

TEST_CASE("degenerate population is a recorded no-op that decays the residual") {
  // Constant reward: fitness all zero, gradient zero, residual *= gamma.
  struct Flat final : FitnessTask {
    std::string_view name() const noexcept override { return "flat"; }
    std::size_t dimension() const noexcept override { return 3; }
    double evaluate(std::span<const double>, std::uint64_t) const override { return 1.0; }
  } flat;
  const auto cfg = config(UpdateMode::full_residual, 1.0, 0.5);
  Optimizer opt(cfg, QuantLattice::filled(3, 8, 4), flat, RunOptions{});
  const auto report = opt.step();
  CHECK(report.update_ratio == 0.0);
  CHECK(report.fitness_std == 0.0);
  CHECK(opt.residual()[0] == 0.0);
}

TEST_CASE("stateless persistent state does not grow with dimension") {
  const std::size_t n = 8, window = 5;
  std::vector<std::size_t> sizes;
  for (std::size_t d : {100u, 3000u}) {
    const auto task = quadratic(d, 0.0);
    RunOptions options;
    options.master_seed = 1;
    const auto r = run(config(UpdateMode::stateless_replay, 0.5, 0.9, 1.0, n, window),
                       QuantLattice::filled(d, 128, 8, 0.01, 128), task, 12, options);
    sizes.push_back(serialize_history(r.history).size());
  }
  CHECK(sizes[0] == sizes[1]);
  CHECK(sizes[0] == kHistoryHeaderBytes + window * (12 + 16 * n));
}

TEST_CASE("residual stays within half a step without gating") {
  const std::size_t d = 32;
  const CounterStream stream(8);
  std::uint64_t c = 0;
  for (double gamma : {0.5, 0.9, 1.0}) {
    QuantLattice lat = QuantLattice::filled(d, 30000, 16);
    auto state = ResidualState::zeros(d);
    const auto cfg = config(UpdateMode::full_residual, 1.0, gamma);
    for (int t = 0; t < 2000; ++t) {
      std::vector<double> g(d);
      for (auto& x : g) x = 4.0 * (stream.uniform(c++) - 0.5);
      const auto out = step_full_residual(lat, state, g, cfg);
      REQUIRE(out.gated.gated_count() == 0);
      for (double e : state.residual) REQUIRE(std::abs(e) <= 0.5 + 1e-12);
    }
  }
}

TEST_CASE("evaluation failures abort the generation with the member index") {
  struct Fragile final : FitnessTask {
    std::string_view name() const noexcept override { return "fragile"; }
    std::size_t dimension() const noexcept override { return 2; }
    double evaluate(std::span<const double> x, std::uint64_t) const override {
      if (x[0] > 0.0) throw std::runtime_error("boom");
      return 0.0;
    }
  } fragile;
  Optimizer opt(config(UpdateMode::full_residual, 1.0, 0.9, 3.0, 16), QuantLattice::filled(2, 8, 4, 1.0, 8),
                fragile, RunOptions{});
  CHECK_THROWS_AS(opt.step(), EvaluationError);
  CHECK(opt.generation() == 0);
}
