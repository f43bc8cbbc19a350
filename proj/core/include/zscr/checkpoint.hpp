#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "zscr/config.hpp"
#include "zscr/model.hpp"
#include "zscr/trainer.hpp"

namespace zscr {

inline constexpr char kCheckpointMagic[4] = {'Z', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Complete training state: parameters, optimizer accumulators, the
/// resolved config, random-engine position and update counters.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  ModelParams params;
  OptimizerStates optimizer;
  std::string rng_state;
  UpdateCounters counters;
};

/// Layout: magic "ZSCK", u32 LE version, u32 length + UTF-8 key=value
/// metadata, then records (u32 name length, name, u32 rank, u32 dims, raw
/// LE float32 values) until end of file.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// IoError, FormatError (bad magic, truncation, missing or misshapen
/// tensors) or VersionMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace zscr
