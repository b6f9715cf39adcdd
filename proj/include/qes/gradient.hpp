#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace qes {

enum class FitnessShaping { zscore, centered_rank };

FitnessShaping parse_fitness_shaping(std::string_view name);
std::string_view to_string(FitnessShaping shaping);

inline constexpr double kNormalizeGuard = 1e-8;

/// Population-normalized fitness. z-score uses the population standard
/// deviation: F_i = (J_i - mean) / (std + 1e-8), and all-zero when std == 0.
/// Centered ranks map to [-0.5, 0.5] with ties sharing their average rank.
std::vector<double> normalize_rewards(std::span<const double> rewards,
                                      FitnessShaping shaping = FitnessShaping::zscore);

/// Raw rewards, normalized fitness and the seeds that produced them.
struct PopulationResult {
  std::vector<double> rewards;
  std::vector<double> fitness;
  std::vector<std::uint64_t> member_seeds;
};

/// g = 1/(N sigma) * sum_i F_i * delta_i, with every delta_i regenerated from
/// its seed in chunks and accumulated in member order in double precision.
std::vector<double> estimate_gradient(std::span<const std::uint64_t> member_seeds,
                                      std::span<const double> fitness, double sigma,
                                      std::size_t dimension);

/// Same estimator written into `out` (overwritten, not accumulated).
void estimate_gradient_into(std::span<const std::uint64_t> member_seeds,
                            std::span<const double> fitness, double sigma,
                            std::span<double> out);

/// Classical continuous estimator: 1/(N sigma) * sum_i F_i * eps_i.
std::vector<double> estimate_gradient_continuous(std::span<const std::uint64_t> member_seeds,
                                                 std::span<const double> fitness, double sigma,
                                                 std::size_t dimension);

}  // namespace qes
