#include "qes/gradient.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "qes/error.hpp"
#include "qes/perturb.hpp"

namespace qes {

namespace {

constexpr std::size_t kChunk = 4096;

void check_population(std::span<const std::uint64_t> seeds, std::span<const double> fitness,
                      double sigma) {
  if (seeds.size() != fitness.size()) {
    throw DimensionError::mismatch("estimate_gradient fitness", seeds.size(), fitness.size());
  }
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
}

std::vector<double> centered_ranks(std::span<const double> rewards) {
  const std::size_t n = rewards.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] < rewards[b]; });
  std::vector<double> ranks(n);
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && rewards[order[hi + 1]] == rewards[order[lo]]) ++hi;
    const double shared = 0.5 * static_cast<double>(lo + hi);
    for (std::size_t k = lo; k <= hi; ++k) ranks[order[k]] = shared;
    lo = hi + 1;
  }
  const double span = static_cast<double>(n - 1);
  for (auto& r : ranks) r = r / span - 0.5;
  return ranks;
}

}  // namespace

FitnessShaping parse_fitness_shaping(std::string_view name) {
  if (name == "zscore") return FitnessShaping::zscore;
  if (name == "centered_rank") return FitnessShaping::centered_rank;
  throw ConfigError("unknown fitness_shaping '" + std::string(name) + "'");
}

std::string_view to_string(FitnessShaping shaping) {
  return shaping == FitnessShaping::zscore ? "zscore" : "centered_rank";
}

std::vector<double> normalize_rewards(std::span<const double> rewards, FitnessShaping shaping) {
  const std::size_t n = rewards.size();
  if (n < 2) throw ConfigError("population size must be at least 2, got " + std::to_string(n));

  if (shaping == FitnessShaping::centered_rank) return centered_ranks(rewards);

  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));

  std::vector<double> fitness(n, 0.0);
  if (sd == 0.0) return fitness;
  for (std::size_t i = 0; i < n; ++i) fitness[i] = (rewards[i] - mean) / (sd + kNormalizeGuard);
  return fitness;
}

void estimate_gradient_into(std::span<const std::uint64_t> member_seeds,
                            std::span<const double> fitness, double sigma, std::span<double> out) {
  check_population(member_seeds, fitness, sigma);
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t d = out.size();
  std::array<Level, kChunk> delta{};
  for (std::size_t i = 0; i < member_seeds.size(); ++i) {
    const double f = fitness[i];
    if (f == 0.0) continue;
    const PerturbationDraw draw{member_seeds[i], sigma, d};
    for (std::size_t offset = 0; offset < d; offset += kChunk) {
      const std::size_t count = std::min(kChunk, d - offset);
      realize_perturbation_into(draw, offset, std::span(delta).first(count));
      for (std::size_t k = 0; k < count; ++k) {
        out[offset + k] += f * static_cast<double>(delta[k]);
      }
    }
  }
  const double denom = static_cast<double>(member_seeds.size()) * sigma;
  for (auto& g : out) g /= denom;
}

std::vector<double> estimate_gradient(std::span<const std::uint64_t> member_seeds,
                                      std::span<const double> fitness, double sigma,
                                      std::size_t dimension) {
  std::vector<double> out(dimension);
  estimate_gradient_into(member_seeds, fitness, sigma, out);
  return out;
}

std::vector<double> estimate_gradient_continuous(std::span<const std::uint64_t> member_seeds,
                                                 std::span<const double> fitness, double sigma,
                                                 std::size_t dimension) {
  check_population(member_seeds, fitness, sigma);
  std::vector<double> out(dimension, 0.0);
  std::array<double, kChunk> eps{};
  for (std::size_t i = 0; i < member_seeds.size(); ++i) {
    const double f = fitness[i];
    if (f == 0.0) continue;
    const PerturbationDraw draw{member_seeds[i], sigma, dimension};
    for (std::size_t offset = 0; offset < dimension; offset += kChunk) {
      const std::size_t count = std::min(kChunk, dimension - offset);
      sample_noise_into(draw, offset, std::span(eps).first(count));
      for (std::size_t k = 0; k < count; ++k) out[offset + k] += f * eps[k];
    }
  }
  const double denom = static_cast<double>(member_seeds.size()) * sigma;
  for (auto& g : out) g /= denom;
  return out;
}

}  // namespace qes
