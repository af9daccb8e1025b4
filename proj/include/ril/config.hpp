#pragma once

#include <string>

#include <json.hpp>

#include "ril/trainer.hpp"

namespace ril {

nlohmann::json config_to_json(const RunConfig& cfg);

/// Strict parse: unknown keys are rejected by name, missing keys keep their
/// defaults, and the result is validated against every module's invariants.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

/// Stable content hash of the canonical serialized form; used to
/// content-address run directories.
std::uint64_t config_checksum(const RunConfig& cfg);

}  // namespace ril
