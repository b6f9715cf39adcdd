#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "qes/lattice.hpp"

namespace qes {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: the k-th value is the k-th output of a SplitMix64
/// generator seeded with `seed`, computed directly from k. Any element can be
/// regenerated without replaying the prefix.
class CounterStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit constexpr CounterStream(std::uint64_t seed) noexcept : seed_(seed) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(seed_ + (counter + 1) * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Stream seed for member `member` of generation `generation`.
std::uint64_t derive_member_seed(std::uint64_t master_seed, std::uint64_t generation,
                                 std::uint64_t member) noexcept;

/// Stream seed for randomness consumed by the update rule itself (stochastic
/// rounding of the step). Disjoint from every member stream of the generation.
std::uint64_t derive_update_seed(std::uint64_t master_seed, std::uint64_t generation) noexcept;

/// floor(x) + b with b = 1 iff uniform < x - floor(x).
inline Level stochastic_round(double x, double uniform) noexcept {
  const double lower = std::floor(x);
  return static_cast<Level>(lower) + (uniform < x - lower ? 1 : 0);
}

/// Recipe for one population member's perturbation. Element j of the stream
/// uses three consecutive counters: 3j and 3j+1 feed a Box-Muller transform
/// (cosine branch) for eps_j, 3j+2 is the Bernoulli draw for b_j.
struct PerturbationDraw {
  std::uint64_t seed;
  double sigma;
  std::size_t length;
};

inline double standard_normal_at(const CounterStream& stream, std::size_t j) noexcept {
  const double u1 = 1.0 - stream.uniform(3 * j);  // (0, 1]
  const double u2 = stream.uniform(3 * j + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// delta = floor(sigma*eps) + Bernoulli(frac(sigma*eps)), realized for
/// elements [offset, offset + out.size()). Pure and thread-safe.
void realize_perturbation_into(const PerturbationDraw& draw, std::size_t offset,
                               std::span<Level> out);

std::vector<Level> realize_perturbation(const PerturbationDraw& draw);

/// The underlying continuous noise eps for the same draw (no rounding).
void sample_noise_into(const PerturbationDraw& draw, std::size_t offset, std::span<double> out);
std::vector<double> sample_noise(const PerturbationDraw& draw);

}  // namespace qes
