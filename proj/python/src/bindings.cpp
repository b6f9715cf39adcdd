#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "qes/analysis.hpp"
#include "qes/cli.hpp"
#include "qes/error.hpp"
#include "qes/eval.hpp"
#include "qes/gradient.hpp"
#include "qes/io.hpp"
#include "qes/lattice.hpp"
#include "qes/optimizer.hpp"
#include "qes/perturb.hpp"

namespace py = pybind11;
using namespace qes;

namespace {

py::dict report_to_dict(const GenerationReport& r) {
  py::dict d;
  d["generation"] = r.generation;
  d["mean_reward"] = r.mean_reward;
  d["best_reward"] = r.best_reward;
  d["fitness_std"] = r.fitness_std;
  d["update_ratio"] = r.update_ratio;
  d["hit_ratio"] = r.hit_ratio;
  d["residual_linf"] = r.residual_linf;
  d["theta_deviation_linf"] = r.theta_deviation_linf;
  d["replay_ms"] = r.replay_ms;
  d["step_linf"] = r.step_linf;
  d["gated_count"] = r.gated_count;
  return d;
}

py::dict run_from_json(const std::string& text) {
  const auto cfg = parse_run_config(nlohmann::json::parse(text));
  const auto task = make_task(cfg.task, cfg.task_params, cfg.dataset_seed);
  RunOptions options;
  options.master_seed = cfg.master_seed;
  options.eval_seed = cfg.eval_seed;
  options.workers = cfg.workers;
  options.instrument = cfg.instrument;
  options.record_timing = cfg.record_timing;
  const auto result = [&] {
    py::gil_scoped_release release;
    return run(cfg.optimizer, initial_lattice(cfg, task->dimension()), *task, cfg.generations, options);
  }();
  py::list reports;
  for (const auto& r : result.reports) reports.append(report_to_dict(r));
  py::dict out;
  out["initial_reward"] = result.initial_reward;
  out["final_reward"] = result.final_reward;
  out["final_weights"] = std::vector<Level>(result.final_lattice.weights().begin(), result.final_lattice.weights().end());
  out["residual"] = result.residual;
  out["reports"] = reports;
  out["history_bytes"] = serialize_history(result.history).size();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quantized evolution strategies core";
  m.attr("__version__") = kVersion;

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);

  py::class_<QuantLattice>(m, "QuantLattice")
      .def(py::init<std::vector<Level>, int, double, Level>(), py::arg("weights"), py::arg("bits"),
           py::arg("scale") = 1.0, py::arg("zero_point") = 0)
      .def_property_readonly("weights",
                             [](const QuantLattice& l) { return std::vector<Level>(l.weights().begin(), l.weights().end()); })
      .def_property_readonly("bits", &QuantLattice::bits)
      .def_property_readonly("scale", &QuantLattice::scale)
      .def_property_readonly("zero_point", &QuantLattice::zero_point)
      .def_property_readonly("max_level", &QuantLattice::max_level)
      .def("__len__", &QuantLattice::dimension)
      .def("dequantize", [](const QuantLattice& l) { return dequantize(l); })
      .def("commit", [](QuantLattice& l, const std::vector<Level>& applied) { l.commit(applied); })
      .def(py::self == py::self);

  m.def(
      "gate_apply",
      [](const QuantLattice& l, const std::vector<Level>& delta) {
        auto g = gate_apply(l, delta);
        return py::make_tuple(g.applied, g.gated_mask);
      },
      py::arg("lattice"), py::arg("delta"), "Gated delta and mask of suppressed entries.");

  m.def("derive_member_seed", &derive_member_seed, py::arg("master_seed"), py::arg("generation"), py::arg("member"));
  m.def("derive_update_seed", &derive_update_seed, py::arg("master_seed"), py::arg("generation"));
  m.def(
      "realize_perturbation",
      [](std::uint64_t seed, double sigma, std::size_t d) { return realize_perturbation(PerturbationDraw{seed, sigma, d}); },
      py::arg("seed"), py::arg("sigma"), py::arg("dimension"));
  m.def(
      "sample_noise",
      [](std::uint64_t seed, double sigma, std::size_t d) { return sample_noise(PerturbationDraw{seed, sigma, d}); },
      py::arg("seed"), py::arg("sigma"), py::arg("dimension"));

  m.def(
      "normalize_rewards",
      [](const std::vector<double>& rewards, const std::string& shaping) {
        return normalize_rewards(rewards, parse_fitness_shaping(shaping));
      },
      py::arg("rewards"), py::arg("shaping") = "zscore");
  m.def(
      "estimate_gradient",
      [](const std::vector<std::uint64_t>& seeds, const std::vector<double>& fitness, double sigma, std::size_t d) {
        return estimate_gradient(seeds, fitness, sigma, d);
      },
      py::arg("seeds"), py::arg("fitness"), py::arg("sigma"), py::arg("dimension"));

  py::class_<OptimizerConfig>(m, "OptimizerConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &OptimizerConfig::alpha)
      .def_readwrite("gamma", &OptimizerConfig::gamma)
      .def_readwrite("sigma", &OptimizerConfig::sigma)
      .def_readwrite("population", &OptimizerConfig::population)
      .def_readwrite("window", &OptimizerConfig::window)
      .def_property(
          "mode", [](const OptimizerConfig& c) { return std::string(to_string(c.mode)); },
          [](OptimizerConfig& c, const std::string& s) { c.mode = parse_update_mode(s); })
      .def("validate", &OptimizerConfig::validate);

  py::class_<HistoryWindow>(m, "HistoryWindow")
      .def(py::init<std::size_t>(), py::arg("capacity"))
      .def(
          "push",
          [](HistoryWindow& h, std::uint64_t generation, std::vector<std::uint64_t> seeds, std::vector<double> fitness) {
            h.push(GenerationRecord{generation, std::move(seeds), std::move(fitness)});
          },
          py::arg("generation"), py::arg("seeds"), py::arg("fitness"))
      .def("__len__", &HistoryWindow::size)
      .def_property_readonly("capacity", &HistoryWindow::capacity)
      .def("serialize", [](const HistoryWindow& h) {
        const auto bytes = serialize_history(h);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      });

  m.def(
      "step_full_residual",
      [](QuantLattice& l, std::vector<double> residual, const std::vector<double>& gradient,
         const OptimizerConfig& cfg) {
        ResidualState state{std::move(residual)};
        const auto out = step_full_residual(l, state, gradient, cfg);
        return py::make_tuple(out.gated.applied, state.residual);
      },
      py::arg("lattice"), py::arg("residual"), py::arg("gradient"), py::arg("config"),
      "Applies one error-feedback step in place; returns (applied, new residual).");
  m.def("rematerialize_residual", &rematerialize_residual, py::arg("lattice"), py::arg("history"), py::arg("config"));

  m.def("run_json", &run_from_json, py::arg("config_json"),
        "Runs an experiment config (JSON text) in memory and returns rewards, weights and reports.");
  m.def(
      "run_to_directory",
      [](const std::string& text) {
        const auto cfg = parse_run_config(nlohmann::json::parse(text));
        py::gil_scoped_release release;
        const auto outcome = run_to_directory(cfg);
        return std::make_tuple(outcome.initial_reward, outcome.final_reward, outcome.completed);
      },
      py::arg("config_json"), "Runs a config and writes all outputs to its out_dir.");
  m.def("registered_tasks", &registered_tasks);
}
