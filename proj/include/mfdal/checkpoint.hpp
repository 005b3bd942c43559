#pragma once

#include <filesystem>
#include <string>

#include "mfdal/dmfnp.hpp"

namespace mfdal {

enum class ModelType { dmfnp, sfnp, mfnp };

std::string to_string(ModelType t);
ModelType model_type_from_string(const std::string& s);

inline constexpr int kCheckpointVersion = 1;

/// Extra fields a baseline needs to rebuild itself. Levels are -1 when unused.
struct CheckpointInfo {
  ModelType type = ModelType::dmfnp;
  std::string task;  // empty if the model is not tied to a task
  int task_levels = 0;
  int low_level = -1;
  int high_level = -1;
};

/// Writes `dir`/manifest.json and `dir`/params.bin (float64 little-endian:
/// network parameters, then feature scaling, output scaling and priors).
void save_checkpoint(const SurrogateModel& model, const std::filesystem::path& dir,
                     const CheckpointInfo& info = {});

struct LoadedCheckpoint {
  SurrogateModel model;
  CheckpointInfo info;
};

/// Throws ParseError on a malformed or truncated checkpoint and
/// IncompatibleCheckpoint on a format version mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Loads and checks that the stored shapes match `expected` (input width,
/// level count, output widths, latent and hidden sizes); a mismatch throws
/// IncompatibleCheckpoint naming both values.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const SurrogateModel& expected);

}  // namespace mfdal
