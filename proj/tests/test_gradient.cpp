#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "qes/error.hpp"
#include "qes/gradient.hpp"

using namespace qes;

namespace {

/// First seed (scanning upward from `start`) whose realization equals `want`.
std::uint64_t find_seed(const std::vector<Level>& want, double sigma, std::uint64_t start) {
  for (std::uint64_t s = start;; ++s) {
    if (realize_perturbation(PerturbationDraw{s, sigma, want.size()}) == want) return s;
  }
}

std::vector<double> random_rewards(std::uint64_t seed, std::size_t n) {
  const CounterStream stream(seed);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = 10.0 * stream.uniform(i) - 3.0;
  return r;
}

}  // namespace

TEST_CASE("z-score normalization") {
  const std::vector<double> r{1, 2, 3};
  const auto f = normalize_rewards(r);
  CHECK(f[0] == doctest::Approx(-1.224744871).epsilon(1e-7));
  CHECK(f[1] == doctest::Approx(0.0));
  CHECK(f[2] == doctest::Approx(1.224744871).epsilon(1e-7));
}

TEST_CASE("equal rewards normalize to zero") {
  const std::vector<double> r{5, 5, 5, 5};
  CHECK(normalize_rewards(r) == std::vector<double>(4, 0.0));
  CHECK(normalize_rewards(r, FitnessShaping::centered_rank) == std::vector<double>(4, 0.0));
}

TEST_CASE("population smaller than two is rejected") {
  const std::vector<double> r{1.0};
  CHECK_THROWS_AS(normalize_rewards(r), ConfigError);
}

TEST_CASE("normalized fitness is centered") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = random_rewards(seed, 2 + seed % 40);
    for (auto shaping : {FitnessShaping::zscore, FitnessShaping::centered_rank}) {
      const auto f = normalize_rewards(r, shaping);
      const double mean = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
      CHECK(std::abs(mean) < 1e-12);
    }
  }
}

TEST_CASE("centered ranks share ties") {
  const std::vector<double> r{3.0, 1.0, 3.0, 2.0};
  const auto f = normalize_rewards(r, FitnessShaping::centered_rank);
  CHECK(f[1] == doctest::Approx(-0.5));
  CHECK(f[3] == doctest::Approx(-0.5 + 1.0 / 3.0));
  CHECK(f[0] == doctest::Approx(0.5 - 1.0 / 6.0));
  CHECK(f[0] == f[2]);
}

TEST_CASE("two-member estimate by hand") {
  const std::uint64_t s1 = find_seed({1, 0}, 1.0, 0);
  const std::uint64_t s2 = find_seed({0, -1}, 1.0, 0);
  const std::vector<std::uint64_t> seeds{s1, s2};
  const std::vector<double> fitness{1.0, -1.0};
  const auto g = estimate_gradient(seeds, fitness, 1.0, 2);
  CHECK(g[0] == 0.5);
  CHECK(g[1] == 0.5);
}

TEST_CASE("zero fitness gives a zero gradient") {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const std::vector<double> fitness(3, 0.0);
  CHECK(estimate_gradient(seeds, fitness, 0.7, 10) == std::vector<double>(10, 0.0));
}

TEST_CASE("streamed estimate equals the materialized sum exactly") {
  for (std::size_t d : {8u, 5000u}) {
    std::vector<std::uint64_t> seeds(16);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_member_seed(77, d, i);
    const auto fitness = normalize_rewards(random_rewards(d, 16));
    const double sigma = 1.3;
    const auto streamed = estimate_gradient(seeds, fitness, sigma, d);
    const auto materialized = oracle::aggregate(oracle::materialize(seeds, sigma, d), fitness, sigma);
    CHECK(streamed == materialized);
  }
}

TEST_CASE("estimate is linear in fitness") {
  std::vector<std::uint64_t> seeds(12);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_member_seed(3, 1, i);
  const auto fitness = normalize_rewards(random_rewards(8, 12));
  std::vector<double> scaled(fitness);
  for (auto& f : scaled) f *= -2.5;
  const auto g = estimate_gradient(seeds, fitness, 0.9, 64);
  const auto gs = estimate_gradient(seeds, scaled, 0.9, 64);
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(gs[j] == doctest::Approx(-2.5 * g[j]).epsilon(1e-12));
}

TEST_CASE("doubling sigma halves the estimate for a fixed perturbation set") {
  std::vector<std::uint64_t> seeds(6);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_member_seed(4, 0, i);
  const auto fitness = normalize_rewards(random_rewards(1, 6));
  const auto deltas = oracle::materialize(seeds, 1.0, 32);
  const auto g1 = oracle::aggregate(deltas, fitness, 1.0);
  const auto g2 = oracle::aggregate(deltas, fitness, 2.0);
  for (std::size_t j = 0; j < g1.size(); ++j) CHECK(g2[j] == doctest::Approx(0.5 * g1[j]).epsilon(1e-15));
  CHECK(estimate_gradient(seeds, fitness, 1.0, 32) == g1);
}

TEST_CASE("estimator rejects mismatched inputs") {
  const std::vector<std::uint64_t> seeds{1, 2};
  const std::vector<double> fitness{1.0};
  CHECK_THROWS_AS(estimate_gradient(seeds, fitness, 1.0, 4), DimensionError);
  const std::vector<double> ok{1.0, -1.0};
  CHECK_THROWS_AS(estimate_gradient(seeds, ok, 0.0, 4), ConfigError);
}

TEST_CASE("continuous estimator aggregates eps") {
  const std::vector<std::uint64_t> seeds{11, 12, 13};
  const std::vector<double> fitness{1.0, 0.0, -1.0};
  const auto g = estimate_gradient_continuous(seeds, fitness, 0.5, 5);
  const auto e0 = sample_noise(PerturbationDraw{11, 0.5, 5});
  const auto e2 = sample_noise(PerturbationDraw{13, 0.5, 5});
  for (std::size_t j = 0; j < 5; ++j) CHECK(g[j] == doctest::Approx((e0[j] - e2[j]) / 1.5));
}
