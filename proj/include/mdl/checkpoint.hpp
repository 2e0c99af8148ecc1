#pragma once

// Binary checkpoint layout (little-endian):
//   "MDLCKPT\0"  u32 version
//   u64 n, n bytes of arch-spec JSON
//   u64 group count, then per group:
//     u64 n, name bytes; u8 trainable; u64 layer count;
//     per layer two tensors (weight, bias): u64 rank, rank x u64 extents,
//     raw IEEE-754 doubles.
// Loading reproduces every value bit for bit.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mdl/models.hpp"

namespace mdl::models {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json arch_to_json(const ArchSpec& spec);
// Unknown keys raise ConfigError. Absent fields keep their defaults, so the
// caller validates after filling in dataset-derived dimensions.
ArchSpec arch_from_json(const nlohmann::json& j);

std::string serialize_model(const Model& model);
Model deserialize_model(const std::string& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mdl::models
