#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "rewardkit/augmentation.hpp"
#include "rewardkit/ingestion.hpp"
#include "rewardkit/media.hpp"
#include "rewardkit/provider.hpp"
#include "rewardkit/templates.hpp"

namespace rewardkit {

struct RunPaths {
  std::filesystem::path work_root = "work";
  // Empty disables the response cache.
  std::filesystem::path cache_root = "work/cache";
  // Empty uses the built-in templates.
  std::filesystem::path templates;
  // Extra verbs appended to the built-in lexicon, one per line.
  std::filesystem::path verbs;
};

struct IngestSettings {
  std::size_t cap = kDefaultSubsampleCap;
  std::uint64_t seed = 0;
};

struct EvalSettings {
  std::vector<std::string> models;
  int concurrency = 4;
  bool require_verified = false;
};

struct AblationFlags {
  bool disable_counterfactual = false;
  bool disable_clipping = false;
};

// Everything a run depends on. Relative paths are resolved against the
// directory of the config file.
struct RunConfig {
  RunPaths paths;
  std::vector<ProviderProfile> providers;
  // Mock scripts keyed by provider_id, for profiles of family "mock".
  std::map<std::string, std::filesystem::path> mock_scripts;
  // Stage name -> provider_id.
  std::map<Stage, std::string> stages;
  PipelineOptions pipeline;
  int template_version = 1;
  SplitOptions splits;
  IngestSettings ingest;
  EvalSettings eval;
  AblationFlags ablation;
  EncoderConfig encoder;
  GatewayOptions gateway;

  const ProviderProfile& provider(const std::string& provider_id) const;
  StageProfiles stage_profiles() const;
  TemplateSet templates() const;
  // Built-in verbs plus paths.verbs.
  std::vector<std::string> verbs() const;
};

// Throws Error(kConfig) naming the offending key.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

// sha256 over the canonical config document plus the digests of the
// templates it selects.
std::string config_digest(const RunConfig& config);

}  // namespace rewardkit
