#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gaf/io.hpp"
#include "gaf/trainer.hpp"

namespace gaf {

inline constexpr std::string_view checkpoint_magic = "GAFCKPT1";
inline constexpr std::uint32_t checkpoint_format_version = 1;

nlohmann::json to_json(const GafConfig& config);
nlohmann::json to_json(const TrainConfig& config);

/// Strict parsers: unknown keys raise ConfigError; missing keys keep defaults.
GafConfig gaf_config_from_json(const nlohmann::json& j, const GafConfig& defaults = {});
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {});

/// Layout: 8-byte magic, u64 header length, JSON header (configs, iteration,
/// RNG state, array manifest), then float32 little-endian arrays in manifest order.
io::Bytes encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gaf
