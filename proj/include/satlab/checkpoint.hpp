#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "satlab/model.hpp"

namespace sat {

/// Named parameter arrays plus a JSON metadata blob.
///
/// Binary layout, little-endian throughout:
///   "SATCKPT1" | version u32 | entry count u32 |
///   per entry: name length u16, UTF-8 name, rank u8, dims u32 x rank, data f32 x numel |
///   metadata length u32, UTF-8 JSON
///
/// Values are stored as f32; a load returns the f32 values widened to f64,
/// so save -> load -> save is byte-identical.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  ModelParams params;
  nlohmann::json metadata = nlohmann::json::object();
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters rounded through f32, as a checkpoint round trip would leave them.
ModelParams round_to_stored_precision(const ModelParams& params);

}  // namespace sat
