#pragma once

#include <filesystem>
#include <string>

#include "tips/encoders.hpp"
#include "tips/objective.hpp"
#include "tips/params.hpp"
#include "tips/splits.hpp"

namespace tips {

struct CheckpointManifest {
  std::string train_hash;  // hash of the training-relevant configuration
  std::string mode;
  std::string backbone;
  ModelDims dims;
  GapNormalizer gaps;
  std::size_t best_epoch = 0;
  double best_val_hr10 = 0.0;
};

/// Writes <dir>/params.bin (raw little-endian doubles, manifest order) and
/// <dir>/manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const ParamRegistry& params,
                     const CheckpointManifest& manifest);

struct Checkpoint {
  ParamRegistry params;
  CheckpointManifest manifest;
};

/// Throws DataError when files are missing, truncated or inconsistent.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace tips
