#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "privleak/lm.hpp"

namespace privleak {

// Binary container, little-endian:
//   "PLCKPT01" | u32 version | config | u32 tensor count |
//   per tensor: u32 name length, name, u64 layer, u64 rows, u64 cols,
//               rows*cols IEEE-754 doubles
// Round trips are exact.

std::string serialize_model(const ModelState& model);
ModelState deserialize_model(std::string_view bytes);  // throws E_PARSE

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of the serialized checkpoint.
std::string model_hash(const ModelState& model);

}  // namespace privleak
