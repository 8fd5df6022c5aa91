#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>

#include "fourllie/model.hpp"
#include "fourllie/params.hpp"

namespace fourllie {

/// Optimizer and loop state needed to continue a run exactly. Random streams
/// are derived from (seed, iteration), so the seed is the whole RNG state.
struct TrainState {
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  ParamStore adam_m;
  ParamStore adam_v;
  double best_psnr = -std::numeric_limits<double>::infinity();
  std::uint64_t best_iteration = 0;
  /// Serialized training configuration of the run (informational).
  std::string train_config_json = "{}";
};

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  std::optional<TrainState> state;
};

/// Parameters are written as float32; the optimizer moments as float64.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamStore& params, const TrainState* state = nullptr);

/// Throws CorruptCheckpoint on unreadable or structurally invalid files.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also throws ConfigMismatch unless the stored config equals `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// FNV-1a fingerprint of the file bytes, as 16 hex digits.
std::string checkpoint_fingerprint(const std::filesystem::path& path);
std::string config_fingerprint(const ModelConfig& config);

}  // namespace fourllie
