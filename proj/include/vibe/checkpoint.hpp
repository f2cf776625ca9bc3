#pragma once

#include <string>

#include "vibe/cf.hpp"
#include "vibe/embedding.hpp"

namespace vibe {

// Checkpoint files: versioned header (method tag, seed, config echo, dims,
// standardization stats) followed by every parameter tensor in declared order,
// shortest-round-trip decimal encoding, closed by an fnv1a64 checksum line.
// Round-trips are exact.

struct CheckpointInfo {
  int format_version = 1;
  std::string method;  // vibe | agnostic-embed | cf-agnostic | cf-aware
  std::uint64_t seed = 0;
  std::string config_echo;
};

void save_vibe_checkpoint(const VibeModel& model, const CheckpointInfo& info,
                          const std::string& path);
VibeModel load_vibe_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

void save_cf_checkpoint(const CFModel& model, const CheckpointInfo& info, const std::string& path);
CFModel load_cf_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

// Method tag without loading the payload.
std::string checkpoint_method(const std::string& path);

}  // namespace vibe
