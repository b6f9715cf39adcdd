#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "qes/analysis.hpp"
#include "qes/lattice.hpp"
#include "qes/optimizer.hpp"

namespace qes {

inline constexpr const char* kTrajectoryHeader =
    "generation,mean_reward,best_reward,fitness_std,update_ratio,hit_ratio,residual_linf,"
    "theta_deviation_linf,replay_ms";

/// One row per generation under kTrajectoryHeader. Reals use %.17g so the file
/// round-trips exactly; NaN is written as "nan".
void write_trajectory_csv(std::ostream& out, std::span<const GenerationReport> reports);
void write_trajectory_csv(const std::filesystem::path& path,
                          std::span<const GenerationReport> reports);
std::vector<GenerationReport> read_trajectory_csv(std::istream& in);
std::vector<GenerationReport> read_trajectory_csv(const std::filesystem::path& path);

/// History as a JSON array of {generation, member_seeds, fitness}; seeds are
/// unsigned 64-bit decimals.
nlohmann::json history_to_json(const HistoryWindow& history);
HistoryWindow history_from_json(const nlohmann::json& records, std::size_t capacity);

/// Compact binary form of the persistent stateless state.
///   header: "QESH" | u32 version | u32 capacity | u32 record count  (16 bytes)
///   record: u64 generation | u32 N | N x u64 seed | N x f64 fitness
/// All fields little-endian. A record costs 12 + 16 N bytes, independent of d.
std::vector<std::uint8_t> serialize_history(const HistoryWindow& history);
HistoryWindow deserialize_history(std::span<const std::uint8_t> bytes);
inline constexpr std::size_t kHistoryHeaderBytes = 16;

struct CheckpointMeta {
  int bits = 0;
  double scale = 1.0;
  Level zero_point = 0;
  std::size_t dimension = 0;
  std::uint64_t rng_master_seed = 0;
  std::uint64_t generation = 0;
};

/// Writes `<stem>.bin` (one little-endian int32 per weight) and `<stem>.json`
/// ({bits, scale, zero_point, d, rng_master_seed, generation}).
void write_checkpoint(const std::filesystem::path& stem, const QuantLattice& lattice,
                      std::uint64_t master_seed, std::uint64_t generation);

struct Checkpoint {
  QuantLattice lattice;
  CheckpointMeta meta;
};

Checkpoint read_checkpoint(const std::filesystem::path& stem);

nlohmann::json summary_to_json(const TrajectorySummary& summary);

}  // namespace qes
