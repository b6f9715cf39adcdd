#include "qes/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "qes/analysis.hpp"
#include "qes/error.hpp"
#include "qes/eval.hpp"
#include "qes/io.hpp"
#include "qes/perturb.hpp"

namespace qes {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename T>
T required(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ConfigError(std::string("missing required field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T optional_field(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json diagnostics_json(const RunConfig& cfg, const Optimizer& opt,
                      const std::vector<GenerationReport>& reports, const RunOutcome& outcome,
                      const std::string& status) {
  const auto summary = summarize(reports);
  json doc = {{"status", status},
              {"version", kVersion},
              {"mode", to_string(cfg.optimizer.mode)},
              {"generations_completed", outcome.completed},
              {"initial_reward", outcome.initial_reward},
              {"final_reward", outcome.final_reward},
              {"summary", summary_to_json(summary)},
              {"history_bytes", serialize_history(opt.history()).size()}};
  std::size_t gated = 0;
  for (const auto& r : reports) gated += r.gated_count;
  doc["gated_total"] = gated;
  if (auto warning = cfg.optimizer.truncation_warning()) doc["truncation_warning"] = *warning;
  if (const auto& shadow = opt.instrumentation()) {
    const auto diag = trajectory_diagnostics(shadow->initial_weights, opt.lattice().weights(),
                                             opt.residual(), shadow->ideal_sum);
    doc["final_theta_deviation_linf"] = diag.theta_deviation_linf;
    doc["final_weight_deviation_linf"] = diag.weight_deviation_linf;
    double xi_ss = 0.0;
    for (double x : shadow->xi_sum) xi_ss += x * x;
    doc["accumulated_xi_rms"] =
        shadow->xi_sum.empty() ? 0.0 : std::sqrt(xi_ss / static_cast<double>(shadow->xi_sum.size()));
  }
  return doc;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  cfg.task = required<std::string>(doc, "task");
  cfg.optimizer.mode = parse_update_mode(required<std::string>(doc, "mode"));
  cfg.bits = required<int>(doc, "bits");
  cfg.optimizer.alpha = required<double>(doc, "alpha");
  cfg.optimizer.sigma = required<double>(doc, "sigma");
  cfg.optimizer.population = required<std::size_t>(doc, "population");
  cfg.generations = required<std::size_t>(doc, "generations");
  cfg.master_seed = required<std::uint64_t>(doc, "master_seed");

  cfg.task_params = doc.value("task_params", json::object());
  cfg.optimizer.gamma = optional_field(doc, "gamma", cfg.optimizer.gamma);
  cfg.optimizer.window = optional_field(doc, "window", cfg.optimizer.window);
  cfg.optimizer.shaping = parse_fitness_shaping(
      optional_field<std::string>(doc, "fitness_shaping", std::string(to_string(cfg.optimizer.shaping))));
  cfg.scale = optional_field(doc, "scale", cfg.scale);
  cfg.zero_point = optional_field(doc, "zero_point", cfg.zero_point);
  if (doc.contains("init_low")) cfg.init_low = required<Level>(doc, "init_low");
  if (doc.contains("init_high")) cfg.init_high = required<Level>(doc, "init_high");
  cfg.dataset_seed = optional_field(doc, "dataset_seed", cfg.dataset_seed);
  cfg.eval_seed = optional_field(doc, "eval_seed", cfg.eval_seed);
  cfg.out_dir = optional_field(doc, "out_dir", cfg.out_dir);
  cfg.instrument = optional_field(doc, "instrument", cfg.instrument);
  cfg.record_timing = optional_field(doc, "record_timing", cfg.record_timing);
  cfg.workers = optional_field(doc, "workers", cfg.workers);

  if (cfg.bits < QuantLattice::kMinBits || cfg.bits > QuantLattice::kMaxBits) {
    throw ConfigError("field 'bits' must be in [1, 16]");
  }
  if (!(cfg.scale > 0.0)) throw ConfigError("field 'scale' must be positive");
  cfg.optimizer.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_json_file(path)); }

json to_json(const RunConfig& cfg) {
  const Level top = (Level{1} << cfg.bits) - 1;
  return {{"task", cfg.task},
          {"task_params", cfg.task_params},
          {"mode", to_string(cfg.optimizer.mode)},
          {"bits", cfg.bits},
          {"scale", cfg.scale},
          {"zero_point", cfg.zero_point},
          {"init_low", cfg.init_low.value_or(0)},
          {"init_high", cfg.init_high.value_or(top)},
          {"alpha", cfg.optimizer.alpha},
          {"gamma", cfg.optimizer.gamma},
          {"sigma", cfg.optimizer.sigma},
          {"population", cfg.optimizer.population},
          {"window", cfg.optimizer.window},
          {"fitness_shaping", to_string(cfg.optimizer.shaping)},
          {"generations", cfg.generations},
          {"master_seed", cfg.master_seed},
          {"dataset_seed", cfg.dataset_seed},
          {"eval_seed", cfg.eval_seed},
          {"out_dir", cfg.out_dir},
          {"instrument", cfg.instrument},
          {"record_timing", cfg.record_timing},
          {"workers", cfg.workers}};
}

QuantLattice initial_lattice(const RunConfig& cfg, std::size_t dimension) {
  const Level top = (Level{1} << cfg.bits) - 1;
  const Level lo = cfg.init_low.value_or(0);
  const Level hi = cfg.init_high.value_or(top);
  if (lo < 0 || hi > top || lo > hi) throw ConfigError("init range must lie inside the codebook");
  const CounterStream stream(derive_member_seed(cfg.dataset_seed, 2, 0));
  const auto width = static_cast<std::uint64_t>(hi - lo + 1);
  std::vector<Level> weights(dimension);
  for (std::size_t j = 0; j < dimension; ++j) {
    weights[j] = lo + static_cast<Level>(stream.bits(j) % width);
  }
  return QuantLattice(std::move(weights), cfg.bits, cfg.scale, cfg.zero_point);
}

RunOutcome run_to_directory(const RunConfig& cfg) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  json echo = to_json(cfg);
  echo["version"] = kVersion;
  write_text(out / "config.json", echo.dump(2) + "\n");

  const auto task = make_task(cfg.task, cfg.task_params, cfg.dataset_seed);
  RunOptions options;
  options.master_seed = cfg.master_seed;
  options.eval_seed = cfg.eval_seed;
  options.workers = cfg.workers;
  options.instrument = cfg.instrument;
  options.record_timing = cfg.record_timing;
  Optimizer opt(cfg.optimizer, initial_lattice(cfg, task->dimension()), *task, options);

  RunOutcome outcome;
  outcome.initial_reward = opt.center_reward();
  std::vector<GenerationReport> reports;
  reports.reserve(cfg.generations);

  auto flush = [&](const std::string& status) {
    write_trajectory_csv(out / "trajectory.csv", reports);
    write_checkpoint(out / "checkpoint", opt.lattice(), cfg.master_seed, opt.generation());
    if (cfg.optimizer.mode == UpdateMode::stateless_replay) {
      write_text(out / "history.json", history_to_json(opt.history()).dump() + "\n");
      const auto bytes = serialize_history(opt.history());
      std::ofstream bin(out / "history.bin", std::ios::binary);
      bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    write_text(out / "diagnostics.json",
               diagnostics_json(cfg, opt, reports, outcome, status).dump(2) + "\n");
  };

  try {
    for (std::size_t t = 0; t < cfg.generations; ++t) {
      reports.push_back(opt.step());
      outcome.completed = reports.size();
    }
    outcome.final_reward = opt.center_reward();
  } catch (const std::exception& e) {
    outcome.final_reward = std::nan("");
    flush(std::string("failed: ") + e.what());
    throw;
  }
  flush("ok");
  return outcome;
}

SweepSpec parse_sweep_spec(const json& doc) {
  if (!doc.is_object() || !doc.contains("entries") || !doc.at("entries").is_array()) {
    throw ConfigError("sweep spec needs an 'entries' array");
  }
  SweepSpec spec;
  for (const auto& e : doc.at("entries")) {
    spec.entries.push_back(SweepEntry{required<std::size_t>(e, "window"), required<double>(e, "gamma")});
  }
  if (spec.entries.empty()) throw ConfigError("sweep spec has no entries");
  spec.seeds = optional_field(doc, "seeds", std::vector<std::uint64_t>{});
  return spec;
}

void run_ablation(const RunConfig& base, const SweepSpec& sweep, const fs::path& out_dir) {
  fs::create_directories(out_dir / "runs");
  const std::vector<std::uint64_t> seeds =
      sweep.seeds.empty() ? std::vector<std::uint64_t>{base.master_seed} : sweep.seeds;

  std::ostringstream summary;
  std::ostringstream runs;
  summary << "window,gamma,runs,final_reward_mean,final_reward_std\n";
  runs << "window,gamma,seed,final_reward\n";
  for (const auto& entry : sweep.entries) {
    std::vector<double> finals;
    for (auto seed : seeds) {
      RunConfig cfg = base;
      cfg.optimizer.window = entry.window;
      cfg.optimizer.gamma = entry.gamma;
      cfg.optimizer.validate();
      cfg.master_seed = seed;
      std::ostringstream name;
      name << "K" << entry.window << "_g" << format_real(entry.gamma) << "_s" << seed;
      cfg.out_dir = (out_dir / "runs" / name.str()).string();
      const auto outcome = run_to_directory(cfg);
      finals.push_back(outcome.final_reward);
      runs << entry.window << ',' << format_real(entry.gamma) << ',' << seed << ','
           << format_real(outcome.final_reward) << '\n';
    }
    double mean = 0.0;
    for (double f : finals) mean += f;
    mean /= static_cast<double>(finals.size());
    double ss = 0.0;
    for (double f : finals) ss += (f - mean) * (f - mean);
    const double sd = std::sqrt(ss / static_cast<double>(finals.size()));
    summary << entry.window << ',' << format_real(entry.gamma) << ',' << finals.size() << ','
            << format_real(mean) << ',' << format_real(sd) << '\n';
  }
  write_text(out_dir / "summary.csv", summary.str());
  write_text(out_dir / "runs.csv", runs.str());
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Quantized evolution strategies experiment driver"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> generations;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool instrument = false;

  auto* run_cmd = app.add_subcommand("run", "Run one optimization from a JSON config");
  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep (window, gamma) pairs over shared seeds");
  std::string sweep_path;
  for (auto* cmd : {run_cmd, ablate_cmd}) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    cmd->add_option("--seed", seed, "Override master_seed");
    cmd->add_option("--generations", generations, "Override generations");
    cmd->add_option("--mode", mode, "Override mode");
    cmd->add_option("--out", out, "Override output directory");
    cmd->add_flag("--instrument", instrument, "Track the shadow high-precision trajectory");
  }
  ablate_cmd->add_option("--sweep", sweep_path, "Sweep spec (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code::config_error;
  }

  RunConfig cfg;
  SweepSpec sweep;
  try {
    json doc = read_json_file(config_path);
    if (doc.is_object()) {
      if (seed) doc["master_seed"] = *seed;
      if (generations) doc["generations"] = *generations;
      if (mode) doc["mode"] = *mode;
      if (out) doc["out_dir"] = *out;
      if (instrument) doc["instrument"] = true;
    }
    cfg = parse_run_config(doc);
    if (ablate_cmd->parsed()) sweep = parse_sweep_spec(read_json_file(sweep_path));
    make_task(cfg.task, cfg.task_params, cfg.dataset_seed);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  if (auto warning = cfg.optimizer.truncation_warning()) std::cerr << "warning: " << *warning << '\n';

  try {
    if (run_cmd->parsed()) {
      const auto outcome = run_to_directory(cfg);
      std::cout << "initial_reward " << format_real(outcome.initial_reward) << "\nfinal_reward "
                << format_real(outcome.final_reward) << "\noutput " << cfg.out_dir << '\n';
    } else {
      run_ablation(cfg, sweep, cfg.out_dir);
      std::cout << "summary " << (fs::path(cfg.out_dir) / "summary.csv").string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return exit_code::runtime_failure;
  }
  return exit_code::ok;
}

}  // namespace qes
