#include "qes/perturb.hpp"

#include "qes/error.hpp"

namespace qes {

namespace {

constexpr std::uint64_t kMemberDomain = 0x6a09e667f3bcc909ULL;
constexpr std::uint64_t kUpdateDomain = 0xbb67ae8584caa73bULL;

std::uint64_t absorb(std::uint64_t state, std::uint64_t word) noexcept {
  return mix64(state ^ mix64(word + CounterStream::kGolden));
}

void check_draw(const PerturbationDraw& draw, std::size_t offset, std::size_t count) {
  if (!(draw.sigma > 0.0)) throw ConfigError("perturbation sigma must be positive");
  if (offset + count > draw.length) {
    throw DimensionError("perturbation chunk exceeds draw length");
  }
}

}  // namespace

std::uint64_t derive_member_seed(std::uint64_t master_seed, std::uint64_t generation,
                                 std::uint64_t member) noexcept {
  std::uint64_t h = absorb(kMemberDomain, master_seed);
  h = absorb(h, generation);
  return absorb(h, member);
}

std::uint64_t derive_update_seed(std::uint64_t master_seed, std::uint64_t generation) noexcept {
  return absorb(absorb(kUpdateDomain, master_seed), generation);
}

void realize_perturbation_into(const PerturbationDraw& draw, std::size_t offset,
                               std::span<Level> out) {
  check_draw(draw, offset, out.size());
  const CounterStream stream(draw.seed);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t j = offset + k;
    const double scaled = draw.sigma * standard_normal_at(stream, j);
    out[k] = stochastic_round(scaled, stream.uniform(3 * j + 2));
  }
}

std::vector<Level> realize_perturbation(const PerturbationDraw& draw) {
  std::vector<Level> out(draw.length);
  realize_perturbation_into(draw, 0, out);
  return out;
}

void sample_noise_into(const PerturbationDraw& draw, std::size_t offset, std::span<double> out) {
  check_draw(draw, offset, out.size());
  const CounterStream stream(draw.seed);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = standard_normal_at(stream, offset + k);
}

std::vector<double> sample_noise(const PerturbationDraw& draw) {
  std::vector<double> out(draw.length);
  sample_noise_into(draw, 0, out);
  return out;
}

}  // namespace qes
