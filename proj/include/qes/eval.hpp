#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qes/lattice.hpp"

namespace qes {

/// Black-box reward J over dequantized real parameters. Implementations must be
/// deterministic in (params, eval_seed) and safe to call concurrently.
class FitnessTask {
 public:
  virtual ~FitnessTask() = default;

  virtual std::string_view name() const noexcept = 0;
  virtual std::size_t dimension() const noexcept = 0;
  virtual double evaluate(std::span<const double> params, std::uint64_t eval_seed) const = 0;

 protected:
  void check_dimension(std::span<const double> params) const;
};

/// J(x) = -||x - optimum||^2
class QuadraticTask final : public FitnessTask {
 public:
  explicit QuadraticTask(std::vector<double> optimum);

  std::string_view name() const noexcept override { return "quadratic"; }
  std::size_t dimension() const noexcept override { return optimum_.size(); }
  double evaluate(std::span<const double> params, std::uint64_t eval_seed) const override;

  std::span<const double> optimum() const noexcept { return optimum_; }

 private:
  std::vector<double> optimum_;
};

/// Negated standard Rosenbrock: -sum_j [100 (x_{j+1} - x_j^2)^2 + (1 - x_j)^2].
class RosenbrockTask final : public FitnessTask {
 public:
  explicit RosenbrockTask(std::size_t dimension);

  std::string_view name() const noexcept override { return "rosenbrock"; }
  std::size_t dimension() const noexcept override { return dimension_; }
  double evaluate(std::span<const double> params, std::uint64_t eval_seed) const override;

 private:
  std::size_t dimension_;
};

/// Reward drawn from N(0, 1) by hashing (params, eval_seed). The expected
/// gradient is zero everywhere but every population sees distinct rewards.
class NoiseTask final : public FitnessTask {
 public:
  explicit NoiseTask(std::size_t dimension);

  std::string_view name() const noexcept override { return "noise"; }
  std::size_t dimension() const noexcept override { return dimension_; }
  double evaluate(std::span<const double> params, std::uint64_t eval_seed) const override;

 private:
  std::size_t dimension_;
};

struct MlpArchitecture {
  std::size_t inputs = 8;
  std::size_t hidden = 24;

  /// W1 (hidden x inputs, row-major), b1 (hidden), w2 (hidden), b2.
  std::size_t parameter_count() const noexcept { return hidden * inputs + 2 * hidden + 1; }
};

/// Classification accuracy of a one-hidden-layer tanh network on a seeded
/// binary dataset: four Gaussian blobs at (+-1, +-1) in the first two input
/// coordinates with XOR labels, remaining coordinates pure noise. An output of
/// exactly zero predicts the majority class.
class QuantizedMlpTask final : public FitnessTask {
 public:
  static constexpr std::size_t kDefaultSamples = 512;

  QuantizedMlpTask(MlpArchitecture arch, std::uint64_t dataset_seed,
                   std::size_t samples = kDefaultSamples);

  std::string_view name() const noexcept override { return "quantized_mlp"; }
  std::size_t dimension() const noexcept override { return arch_.parameter_count(); }
  double evaluate(std::span<const double> params, std::uint64_t eval_seed) const override;

  const MlpArchitecture& architecture() const noexcept { return arch_; }
  std::size_t samples() const noexcept { return labels_.size(); }
  std::span<const double> features() const noexcept { return features_; }
  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  std::uint8_t majority_label() const noexcept { return majority_; }

 private:
  MlpArchitecture arch_;
  std::vector<double> features_;  // samples x inputs, row-major
  std::vector<std::uint8_t> labels_;
  std::uint8_t majority_ = 0;
};

/// Builds a task from its registry name. `params` carries task-specific keys:
///   quadratic:     dimension, optimum (array) or optimum_low/optimum_high
///   rosenbrock:    dimension
///   noise:         dimension
///   quantized_mlp: inputs, hidden, samples
std::unique_ptr<FitnessTask> make_task(std::string_view name, const nlohmann::json& params,
                                       std::uint64_t dataset_seed);

std::vector<std::string> registered_tasks();

struct EvaluationOptions {
  double sigma = 1.0;
  std::uint64_t eval_seed = 0;
  /// 0 evaluates members sequentially by perturbing and restoring one working
  /// buffer; k > 0 evaluates copies on k threads. Both return identical rewards.
  unsigned workers = 0;
};

/// Reward of every member on Gate(W + delta_i), in member order. The lattice
/// is never modified.
std::vector<double> evaluate_population(const QuantLattice& lattice,
                                        std::span<const std::uint64_t> member_seeds,
                                        const FitnessTask& task, const EvaluationOptions& options);

/// Reward of the unperturbed weights.
double evaluate_center(const QuantLattice& lattice, const FitnessTask& task,
                       std::uint64_t eval_seed);

}  // namespace qes
