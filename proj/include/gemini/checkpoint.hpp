#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gemini/model.hpp"

namespace gemini {

struct CheckpointInfo {
  std::string phase;
  int64_t iteration = 0;
  uint64_t config_hash = 0;
};

/// Binary layout: "GCKP", u32 version, u64 config hash, phase string,
/// i64 iteration, u32 tensor count, then per tensor: name, u32 rank, u32 dims,
/// f64 values. Strings are u32 length + bytes. Little endian.
void save_checkpoint(const std::filesystem::path& path, GeminiModel& model,
                     const std::string& phase, int64_t iteration);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores every parameter of `model`. Throws CheckpointError when the stored
/// config hash differs from the model's or a tensor is missing or misshapen.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, GeminiModel& model);

}  // namespace gemini
