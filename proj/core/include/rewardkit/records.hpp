#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "rewardkit/core_model.hpp"

namespace rewardkit {

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const Episode& episode);
// Throws Error(kValidation) on missing/ill-typed fields or broken invariants.
Episode episode_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Prediction& prediction);
Prediction prediction_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SubsetResult& result);
SubsetResult subset_result_from_json(const nlohmann::json& j);

// Episode store: one JSON object per line with schema_version. When
// config_digest is non-empty it is stamped on every record.
void write_episodes(const std::filesystem::path& path,
                    const std::vector<Episode>& episodes,
                    const std::string& config_digest = {});
std::vector<Episode> read_episodes(const std::filesystem::path& path);

// Reads non-empty lines; throws Error(kIo) when the file cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);
// Writes atomically (temp file + rename), creating parent directories.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace rewardkit
