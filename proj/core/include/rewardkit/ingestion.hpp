#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rewardkit/core_model.hpp"

namespace rewardkit {

// One line of a source manifest. raw_score is the 0..100 human progress
// score for organically scored rollouts; absent means a demonstration.
struct RawEntry {
  std::string id;
  std::string video_ref;
  std::string task_text;
  std::optional<int> raw_score;
  std::string embodiment;
  Perspective perspective = Perspective::kUnknown;
  // Local video path that did not exist at load time.
  bool video_missing = false;
  // Fields this version does not interpret, written back unchanged.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const RawEntry&) const = default;
};

struct Manifest {
  std::string dataset_name;
  std::vector<RawEntry> entries;
  int schema_version = 1;
};

struct Rejection {
  std::string source;
  std::size_t line = 0;
  std::string id;
  std::string reason;
  std::string record;
};

struct LoadedManifest {
  Manifest manifest;
  std::vector<Rejection> rejections;
};

// Parses a line-delimited manifest. Malformed lines become rejections.
// Throws Error(kIo) if unreadable, Error(kValidation) "empty manifest" if no
// line is valid unless require_entries is false.
LoadedManifest load_manifest(const std::filesystem::path& path, bool require_entries = true);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
void write_rejections(const std::filesystem::path& path, std::span<const Rejection> rejections);

inline constexpr std::size_t kDefaultSubsampleCap = 1200;

// Uniform sample of at most `cap` entries without replacement, order
// preserved. The generator is seeded from (seed, dataset_name).
Manifest subsample(const Manifest& manifest, std::size_t cap, std::uint64_t seed);

struct NormalizedEntries {
  std::vector<Episode> episodes;
  std::vector<Rejection> rejections;
};

// Demonstrations become score-5 episodes; scored rollouts are mapped through
// map_roboarena_score. Out-of-range scores become rejections.
NormalizedEntries normalize_entries(const Manifest& manifest);

// Trims task text and re-checks invariants. Idempotent.
std::vector<Episode> canonicalize(std::vector<Episode> episodes);

// Lowercase, trim, collapse internal whitespace.
std::string normalize_task_key(std::string_view task_text);

struct SplitRatios {
  double train = 45072.0 / 54135.0;
  double val = 6232.0 / 54135.0;
  double test = 2831.0 / 54135.0;
};

struct SplitOptions {
  SplitRatios ratios;
  std::uint64_t seed = 0;
  // Apportion each source dataset separately; keys are then scoped per source.
  bool per_source = false;
};

// Assigns splits so that episodes sharing a normalized task key share a
// split; augmented children follow their parent. Throws Error(kValidation)
// "insufficient task diversity" with fewer than 3 distinct keys.
std::vector<Episode> build_splits(std::vector<Episode> episodes, const SplitOptions& options);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total = 0;

  bool operator==(const SplitCounts&) const = default;
};

// Throws Error(kValidation) if any episode has no split.
SplitCounts split_accounting(std::span<const Episode> episodes);

// Largest-remainder apportionment of `total` units across weights.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights);

}  // namespace rewardkit
