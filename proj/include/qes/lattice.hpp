#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qes {

using Level = std::int64_t;

/// Integer weights on the codebook {0, ..., 2^bits - 1} with a per-tensor
/// affine dequantization x = scale * (w - zero_point).
///
/// Levels are held as signed 64-bit values regardless of `bits`, so W + delta
/// can be formed before the range check without overflow.
class QuantLattice {
 public:
  static constexpr int kMinBits = 1;
  static constexpr int kMaxBits = 16;

  QuantLattice(std::vector<Level> weights, int bits, double scale = 1.0, Level zero_point = 0);

  /// Every weight set to `level`.
  static QuantLattice filled(std::size_t dimension, Level level, int bits, double scale = 1.0,
                             Level zero_point = 0);

  std::size_t dimension() const noexcept { return weights_.size(); }
  int bits() const noexcept { return bits_; }
  double scale() const noexcept { return scale_; }
  Level zero_point() const noexcept { return zero_point_; }
  Level max_level() const noexcept { return (Level{1} << bits_) - 1; }

  bool contains(Level w) const noexcept { return w >= 0 && w <= max_level(); }

  std::span<const Level> weights() const noexcept { return weights_; }
  Level operator[](std::size_t j) const { return weights_[j]; }

  double dequantize(Level w) const noexcept { return scale_ * static_cast<double>(w - zero_point_); }

  /// Adds `applied` to the weights. Throws if any result leaves the codebook,
  /// so callers must pass a gated delta.
  void commit(std::span<const Level> applied);

  friend bool operator==(const QuantLattice&, const QuantLattice&) = default;

 private:
  std::vector<Level> weights_;
  int bits_;
  double scale_;
  Level zero_point_;
};

/// Result of boundary gating an attempted integer update.
struct GatedDelta {
  std::vector<Level> applied;
  std::vector<bool> gated_mask;

  std::size_t gated_count() const noexcept;
  std::size_t changed_count() const noexcept;
};

/// Element-wise gate: delta_j passes where 0 <= W_j + delta_j < 2^bits,
/// otherwise it is zeroed and flagged. Does not modify the lattice.
GatedDelta gate_apply(const QuantLattice& lattice, std::span<const Level> delta);

/// Writes the gated perturbed weights W' (not the delta) for the index range
/// [offset, offset + delta.size()) into `out`.
void gate_perturb_into(const QuantLattice& lattice, std::size_t offset,
                       std::span<const Level> delta, std::span<Level> out);

std::vector<double> dequantize(const QuantLattice& lattice);
void dequantize_into(const QuantLattice& lattice, std::span<const Level> levels,
                     std::span<double> out);

}  // namespace qes
