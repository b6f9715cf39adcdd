#include "qes/lattice.hpp"

#include <algorithm>
#include <string>

#include "qes/error.hpp"

namespace qes {

QuantLattice::QuantLattice(std::vector<Level> weights, int bits, double scale, Level zero_point)
    : weights_(std::move(weights)), bits_(bits), scale_(scale), zero_point_(zero_point) {
  if (bits_ < kMinBits || bits_ > kMaxBits) {
    throw ConfigError("bits must be in [1, 16], got " + std::to_string(bits_));
  }
  if (!(scale_ > 0.0)) {
    throw ConfigError("scale must be positive");
  }
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (!contains(weights_[j])) {
      throw ConfigError("weight " + std::to_string(j) + " = " + std::to_string(weights_[j]) +
                        " is outside the " + std::to_string(bits_) + "-bit codebook");
    }
  }
}

QuantLattice QuantLattice::filled(std::size_t dimension, Level level, int bits, double scale,
                                  Level zero_point) {
  return QuantLattice(std::vector<Level>(dimension, level), bits, scale, zero_point);
}

void QuantLattice::commit(std::span<const Level> applied) {
  if (applied.size() != weights_.size()) {
    throw DimensionError::mismatch("commit", weights_.size(), applied.size());
  }
  for (std::size_t j = 0; j < applied.size(); ++j) {
    if (!contains(weights_[j] + applied[j])) {
      throw ConfigError("commit of ungated delta at index " + std::to_string(j));
    }
  }
  for (std::size_t j = 0; j < applied.size(); ++j) weights_[j] += applied[j];
}

std::size_t GatedDelta::gated_count() const noexcept {
  return static_cast<std::size_t>(std::count(gated_mask.begin(), gated_mask.end(), true));
}

std::size_t GatedDelta::changed_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(applied.begin(), applied.end(), [](Level v) { return v != 0; }));
}

GatedDelta gate_apply(const QuantLattice& lattice, std::span<const Level> delta) {
  const std::size_t d = lattice.dimension();
  if (delta.size() != d) throw DimensionError::mismatch("gate_apply", d, delta.size());

  GatedDelta out{std::vector<Level>(d, 0), std::vector<bool>(d, false)};
  const auto w = lattice.weights();
  for (std::size_t j = 0; j < d; ++j) {
    if (lattice.contains(w[j] + delta[j])) {
      out.applied[j] = delta[j];
    } else {
      out.gated_mask[j] = true;
    }
  }
  return out;
}

void gate_perturb_into(const QuantLattice& lattice, std::size_t offset,
                       std::span<const Level> delta, std::span<Level> out) {
  if (out.size() != delta.size()) {
    throw DimensionError::mismatch("gate_perturb_into", delta.size(), out.size());
  }
  if (offset + delta.size() > lattice.dimension()) {
    throw DimensionError("gate_perturb_into: chunk exceeds lattice dimension");
  }
  const auto w = lattice.weights().subspan(offset, delta.size());
  for (std::size_t j = 0; j < delta.size(); ++j) {
    const Level moved = w[j] + delta[j];
    out[j] = lattice.contains(moved) ? moved : w[j];
  }
}

std::vector<double> dequantize(const QuantLattice& lattice) {
  std::vector<double> out(lattice.dimension());
  dequantize_into(lattice, lattice.weights(), out);
  return out;
}

void dequantize_into(const QuantLattice& lattice, std::span<const Level> levels,
                     std::span<double> out) {
  if (out.size() != levels.size()) {
    throw DimensionError::mismatch("dequantize_into", levels.size(), out.size());
  }
  for (std::size_t j = 0; j < levels.size(); ++j) out[j] = lattice.dequantize(levels[j]);
}

}  // namespace qes
