#include "qes/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <thread>

#include "qes/error.hpp"
#include "qes/perturb.hpp"

namespace qes {

namespace {

constexpr std::size_t kChunk = 4096;

/// N(0, 1) draw at stream position `j` (Box-Muller cosine branch).
double normal_draw(const CounterStream& stream, std::size_t j) {
  return standard_normal_at(stream, j);
}

std::size_t json_size(const nlohmann::json& params, const char* key) {
  if (!params.contains(key)) throw ConfigError(std::string("task parameter '") + key + "' is required");
  return params.at(key).get<std::size_t>();
}

/// Evaluates members [i for i in members] using one working buffer: perturb,
/// evaluate, restore.
void evaluate_members(const QuantLattice& lattice, std::span<const std::uint64_t> seeds,
                      const FitnessTask& task, const EvaluationOptions& options,
                      std::size_t first, std::size_t stride, std::span<double> rewards) {
  const std::size_t d = lattice.dimension();
  const auto base = lattice.weights();
  std::vector<Level> working(base.begin(), base.end());
  std::vector<double> params(d);
  std::vector<Level> delta(std::min(kChunk, d));

  for (std::size_t i = first; i < seeds.size(); i += stride) {
    const PerturbationDraw draw{seeds[i], options.sigma, d};
    for (std::size_t offset = 0; offset < d; offset += kChunk) {
      const std::size_t count = std::min(kChunk, d - offset);
      auto chunk = std::span(delta).first(count);
      realize_perturbation_into(draw, offset, chunk);
      gate_perturb_into(lattice, offset, chunk, std::span(working).subspan(offset, count));
    }
    dequantize_into(lattice, working, params);
    try {
      rewards[i] = task.evaluate(params, options.eval_seed);
    } catch (const std::exception& e) {
      throw EvaluationError(i, e.what());
    }
    if (!std::isfinite(rewards[i])) throw EvaluationError(i, "non-finite reward");
    std::copy(base.begin(), base.end(), working.begin());
  }
}

}  // namespace

void FitnessTask::check_dimension(std::span<const double> params) const {
  if (params.size() != dimension()) {
    throw DimensionError::mismatch(std::string(name()).c_str(), dimension(), params.size());
  }
}

QuadraticTask::QuadraticTask(std::vector<double> optimum) : optimum_(std::move(optimum)) {
  if (optimum_.empty()) throw ConfigError("quadratic task needs dimension >= 1");
}

double QuadraticTask::evaluate(std::span<const double> params, std::uint64_t) const {
  check_dimension(params);
  double ss = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double diff = params[j] - optimum_[j];
    ss += diff * diff;
  }
  return -ss;
}

RosenbrockTask::RosenbrockTask(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ < 2) throw ConfigError("rosenbrock task needs dimension >= 2");
}

double RosenbrockTask::evaluate(std::span<const double> x, std::uint64_t) const {
  check_dimension(x);
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < x.size(); ++j) {
    const double a = x[j + 1] - x[j] * x[j];
    const double b = 1.0 - x[j];
    total += 100.0 * a * a + b * b;
  }
  return -total;
}

NoiseTask::NoiseTask(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ConfigError("noise task needs dimension >= 1");
}

double NoiseTask::evaluate(std::span<const double> params, std::uint64_t eval_seed) const {
  check_dimension(params);
  std::uint64_t h = mix64(eval_seed ^ 0x243f6a8885a308d3ULL);
  for (double p : params) h = mix64(h ^ std::bit_cast<std::uint64_t>(p)) + CounterStream::kGolden;
  return normal_draw(CounterStream(h), 0);
}

QuantizedMlpTask::QuantizedMlpTask(MlpArchitecture arch, std::uint64_t dataset_seed,
                                   std::size_t samples)
    : arch_(arch) {
  if (arch_.inputs < 2 || arch_.hidden < 1) {
    throw ConfigError("quantized_mlp needs inputs >= 2 and hidden >= 1");
  }
  if (samples < 1) throw ConfigError("quantized_mlp needs at least one sample");

  const CounterStream stream(derive_member_seed(dataset_seed, 0, 0));
  const std::size_t per_sample = arch_.inputs + 1;
  features_.resize(samples * arch_.inputs);
  labels_.resize(samples);
  std::size_t positives = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t base = s * per_sample;
    const std::uint64_t cluster = stream.bits(3 * base) >> 62;
    const double cx = (cluster & 1U) ? 1.0 : -1.0;
    const double cy = (cluster & 2U) ? 1.0 : -1.0;
    double* row = &features_[s * arch_.inputs];
    row[0] = cx + 0.5 * normal_draw(stream, base + 1);
    row[1] = cy + 0.5 * normal_draw(stream, base + 2);
    for (std::size_t k = 2; k < arch_.inputs; ++k) row[k] = normal_draw(stream, base + 1 + k);
    labels_[s] = (cx > 0) != (cy > 0) ? 1 : 0;
    positives += labels_[s];
  }
  majority_ = 2 * positives > samples ? 1 : 0;
}

double QuantizedMlpTask::evaluate(std::span<const double> params, std::uint64_t) const {
  check_dimension(params);
  const std::size_t in = arch_.inputs;
  const std::size_t hid = arch_.hidden;
  const double* w1 = params.data();
  const double* b1 = w1 + hid * in;
  const double* w2 = b1 + hid;
  const double b2 = w2[hid];

  std::size_t correct = 0;
  for (std::size_t s = 0; s < labels_.size(); ++s) {
    const double* x = &features_[s * in];
    double out = b2;
    for (std::size_t h = 0; h < hid; ++h) {
      double pre = b1[h];
      const double* row = w1 + h * in;
      for (std::size_t k = 0; k < in; ++k) pre += row[k] * x[k];
      out += w2[h] * std::tanh(pre);
    }
    const std::uint8_t predicted = out > 0.0 ? 1 : (out < 0.0 ? 0 : majority_);
    correct += predicted == labels_[s];
  }
  return static_cast<double>(correct) / static_cast<double>(labels_.size());
}

std::unique_ptr<FitnessTask> make_task(std::string_view name, const nlohmann::json& params,
                                       std::uint64_t dataset_seed) {
  if (name == "quadratic") {
    const std::size_t d = json_size(params, "dimension");
    std::vector<double> optimum;
    if (params.contains("optimum")) {
      optimum = params.at("optimum").get<std::vector<double>>();
      if (optimum.size() != d) throw DimensionError::mismatch("quadratic optimum", d, optimum.size());
    } else {
      const double lo = params.value("optimum_low", -1.0);
      const double hi = params.value("optimum_high", 1.0);
      const CounterStream stream(derive_member_seed(dataset_seed, 1, 0));
      optimum.resize(d);
      for (std::size_t j = 0; j < d; ++j) optimum[j] = lo + (hi - lo) * stream.uniform(j);
    }
    return std::make_unique<QuadraticTask>(std::move(optimum));
  }
  if (name == "rosenbrock") return std::make_unique<RosenbrockTask>(json_size(params, "dimension"));
  if (name == "noise") return std::make_unique<NoiseTask>(json_size(params, "dimension"));
  if (name == "quantized_mlp") {
    MlpArchitecture arch;
    arch.inputs = params.value("inputs", arch.inputs);
    arch.hidden = params.value("hidden", arch.hidden);
    const std::size_t samples = params.value("samples", QuantizedMlpTask::kDefaultSamples);
    return std::make_unique<QuantizedMlpTask>(arch, dataset_seed, samples);
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::vector<std::string> registered_tasks() {
  return {"quadratic", "rosenbrock", "noise", "quantized_mlp"};
}

std::vector<double> evaluate_population(const QuantLattice& lattice,
                                        std::span<const std::uint64_t> member_seeds,
                                        const FitnessTask& task,
                                        const EvaluationOptions& options) {
  if (task.dimension() != lattice.dimension()) {
    throw DimensionError::mismatch("task dimension", lattice.dimension(), task.dimension());
  }
  std::vector<double> rewards(member_seeds.size(), 0.0);
  const std::size_t workers = std::min<std::size_t>(options.workers, member_seeds.size());
  if (workers == 0) {
    evaluate_members(lattice, member_seeds, task, options, 0, 1, rewards);
    return rewards;
  }

  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          evaluate_members(lattice, member_seeds, task, options, w, workers, rewards);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
  }
  // Surface the failure with the lowest member index, as a sequential pass would.
  std::exception_ptr first;
  std::size_t first_member = member_seeds.size();
  for (auto& failure : failures) {
    if (!failure) continue;
    try {
      std::rethrow_exception(failure);
    } catch (const EvaluationError& e) {
      if (e.member() < first_member) {
        first_member = e.member();
        first = failure;
      }
    } catch (...) {
      if (!first) first = failure;
    }
  }
  if (first) std::rethrow_exception(first);
  return rewards;
}

double evaluate_center(const QuantLattice& lattice, const FitnessTask& task,
                       std::uint64_t eval_seed) {
  if (task.dimension() != lattice.dimension()) {
    throw DimensionError::mismatch("task dimension", lattice.dimension(), task.dimension());
  }
  return task.evaluate(dequantize(lattice), eval_seed);
}

}  // namespace qes
