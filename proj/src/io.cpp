#include "qes/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qes/error.hpp"

namespace qes {

namespace {

constexpr std::uint32_t kHistoryVersion = 1;

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
}

class LeReader {
 public:
  explicit LeReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw ConfigError("truncated history buffer");
    T value = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) value |= static_cast<T>(bytes_[pos_ + b]) << (8 * b);
    pos_ += sizeof(T);
    return value;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void write_trajectory_csv(std::ostream& out, std::span<const GenerationReport> reports) {
  out << kTrajectoryHeader << '\n';
  for (const auto& r : reports) {
    out << r.generation << ',' << format_real(r.mean_reward) << ',' << format_real(r.best_reward)
        << ',' << format_real(r.fitness_std) << ',' << format_real(r.update_ratio) << ','
        << format_real(r.hit_ratio) << ',' << format_real(r.residual_linf) << ','
        << format_real(r.theta_deviation_linf) << ',' << format_real(r.replay_ms) << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path,
                          std::span<const GenerationReport> reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trajectory_csv(out, reports);
}

std::vector<GenerationReport> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw ConfigError("trajectory CSV header mismatch");
  }
  std::vector<GenerationReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 9) throw ConfigError("trajectory CSV row has " + std::to_string(cells.size()) + " cells");
    auto real = [&](std::size_t k) { return std::strtod(cells[k].c_str(), nullptr); };
    GenerationReport r;
    r.generation = std::strtoull(cells[0].c_str(), nullptr, 10);
    r.mean_reward = real(1);
    r.best_reward = real(2);
    r.fitness_std = real(3);
    r.update_ratio = real(4);
    r.hit_ratio = real(5);
    r.residual_linf = real(6);
    r.theta_deviation_linf = real(7);
    r.replay_ms = real(8);
    out.push_back(r);
  }
  return out;
}

std::vector<GenerationReport> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return read_trajectory_csv(in);
}

nlohmann::json history_to_json(const HistoryWindow& history) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : history.records()) {
    records.push_back({{"generation", r.generation},
                       {"member_seeds", r.member_seeds},
                       {"fitness", r.fitness}});
  }
  return records;
}

HistoryWindow history_from_json(const nlohmann::json& records, std::size_t capacity) {
  if (!records.is_array()) throw ConfigError("history JSON must be an array");
  HistoryWindow history(capacity);
  for (const auto& r : records) {
    history.push(GenerationRecord{r.at("generation").get<std::uint64_t>(),
                                  r.at("member_seeds").get<std::vector<std::uint64_t>>(),
                                  r.at("fitness").get<std::vector<double>>()});
  }
  return history;
}

std::vector<std::uint8_t> serialize_history(const HistoryWindow& history) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'Q', 'E', 'S', 'H'});
  put_le<std::uint32_t>(out, kHistoryVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(history.capacity()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(history.size()));
  for (const auto& r : history.records()) {
    put_le<std::uint64_t>(out, r.generation);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.member_seeds.size()));
    for (auto s : r.member_seeds) put_le<std::uint64_t>(out, s);
    for (double f : r.fitness) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(f));
  }
  return out;
}

HistoryWindow deserialize_history(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHistoryHeaderBytes || std::memcmp(bytes.data(), "QESH", 4) != 0) {
    throw ConfigError("not a history buffer");
  }
  LeReader in(bytes.subspan(4));
  if (in.get<std::uint32_t>() != kHistoryVersion) throw ConfigError("unsupported history version");
  const std::uint32_t capacity = in.get<std::uint32_t>();
  const std::uint32_t count = in.get<std::uint32_t>();
  HistoryWindow history(capacity);
  for (std::uint32_t k = 0; k < count; ++k) {
    GenerationRecord r;
    r.generation = in.get<std::uint64_t>();
    const std::uint32_t n = in.get<std::uint32_t>();
    r.member_seeds.resize(n);
    r.fitness.resize(n);
    for (auto& s : r.member_seeds) s = in.get<std::uint64_t>();
    for (auto& f : r.fitness) f = std::bit_cast<double>(in.get<std::uint64_t>());
    history.push(std::move(r));
  }
  if (!in.done()) throw ConfigError("trailing bytes after history records");
  return history;
}

void write_checkpoint(const std::filesystem::path& stem, const QuantLattice& lattice,
                      std::uint64_t master_seed, std::uint64_t generation) {
  std::vector<std::uint8_t> raw;
  raw.reserve(4 * lattice.dimension());
  for (Level w : lattice.weights()) {
    put_le<std::uint32_t>(raw, static_cast<std::uint32_t>(static_cast<std::int32_t>(w)));
  }
  {
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + stem.string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  const nlohmann::json meta = {{"bits", lattice.bits()},
                               {"scale", lattice.scale()},
                               {"zero_point", lattice.zero_point()},
                               {"d", lattice.dimension()},
                               {"rng_master_seed", master_seed},
                               {"generation", generation}};
  std::ofstream out(with_suffix(stem, ".json"), std::ios::binary);
  out << meta.dump(2) << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& stem) {
  std::ifstream meta_in(with_suffix(stem, ".json"), std::ios::binary);
  if (!meta_in) throw ConfigError("cannot read checkpoint metadata for " + stem.string());
  const auto meta_json = nlohmann::json::parse(meta_in);
  CheckpointMeta meta;
  meta.bits = meta_json.at("bits").get<int>();
  meta.scale = meta_json.at("scale").get<double>();
  meta.zero_point = meta_json.at("zero_point").get<Level>();
  meta.dimension = meta_json.at("d").get<std::size_t>();
  meta.rng_master_seed = meta_json.at("rng_master_seed").get<std::uint64_t>();
  meta.generation = meta_json.at("generation").get<std::uint64_t>();

  std::ifstream raw_in(with_suffix(stem, ".bin"), std::ios::binary);
  if (!raw_in) throw ConfigError("cannot read checkpoint weights for " + stem.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(raw_in)), {});
  if (raw.size() != 4 * meta.dimension) {
    throw DimensionError::mismatch("checkpoint bytes", 4 * meta.dimension, raw.size());
  }
  LeReader in(raw);
  std::vector<Level> weights(meta.dimension);
  for (auto& w : weights) w = static_cast<std::int32_t>(in.get<std::uint32_t>());
  return Checkpoint{QuantLattice(std::move(weights), meta.bits, meta.scale, meta.zero_point), meta};
}

nlohmann::json summary_to_json(const TrajectorySummary& s) {
  auto real = [](double v) -> nlohmann::json {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
  };
  return {{"generations", s.generations},
          {"first_mean_reward", real(s.first_mean_reward)},
          {"last_mean_reward", real(s.last_mean_reward)},
          {"best_reward", real(s.best_reward)},
          {"mean_update_ratio", real(s.mean_update_ratio)},
          {"mean_hit_ratio", real(s.mean_hit_ratio)},
          {"max_residual_linf", real(s.max_residual_linf)},
          {"max_theta_deviation_linf", real(s.max_theta_deviation_linf)},
          {"total_replay_ms", real(s.total_replay_ms)}};
}

}  // namespace qes
