#pragma once

#include <filesystem>
#include <string>

#include "intent/network.hpp"

namespace intent {

inline constexpr const char* kCheckpointVersion = "intent-ckpt-1";

// Writes <dir>/manifest.json and <dir>/weights.bin (raw little-endian f32, manifest order).
void save_checkpoint(const Network& net, const std::filesystem::path& dir);

// Throws PathError when files are missing and CheckpointError on any inconsistency; never
// returns a partially populated network.
Network load_checkpoint(const std::filesystem::path& dir);

// Manifest text exactly as written by save_checkpoint.
std::string checkpoint_manifest(const Network& net);

}  // namespace intent
