#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rewardkit/augmentation.hpp"
#include "rewardkit/clock.hpp"
#include "rewardkit/core_model.hpp"
#include "rewardkit/log.hpp"
#include "rewardkit/provider.hpp"
#include "rewardkit/templates.hpp"

namespace rewardkit {

inline constexpr std::string_view kRoboArenaSubset = "RoboArena";

// "SCORE: <n>" (last occurrence) first, otherwise the last standalone integer
// in 1..5. Denominators ("out of 5", "4/5"), range bounds ("1-5") and
// decimals are not standalone.
std::optional<int> parse_prediction(std::string_view raw_text);

struct EvalJob {
  ProviderProfile model_profile;
  std::vector<Episode> benchmark;
  int concurrency = 4;
  // Reject benchmark episodes that did not pass human verification.
  bool require_verified = false;
  // When set, workers stop taking episodes; finished ones stay in the journal.
  const std::atomic<bool>* cancel = nullptr;
};

// Runs one model over a benchmark. Every prediction is archived under
// <archive_dir>/<model_id>.predictions.jsonl together with its prompt; an
// interrupted run leaves a .partial journal that the next run resumes from.
class EvalHarness {
 public:
  EvalHarness(Gateway& gateway, TemplateSet templates, FrameSource& frames, std::filesystem::path archive_dir,
              Clock& clock = system_clock(), Logger& logger = null_logger());

  // One Prediction per benchmark episode, in benchmark order. Provider and
  // media failures become parse_failed predictions with the status recorded.
  // Throws Error(kStage) "interrupted" when cancelled before finishing.
  std::vector<Prediction> evaluate_model(const EvalJob& job);

  std::string render_prompt(const Episode& episode) const;

  static std::filesystem::path archive_path(const std::filesystem::path& archive_dir, const std::string& model_id);
  // Predictions from a finished archive.
  static std::vector<Prediction> read_archive(const std::filesystem::path& path);

 private:
  Gateway& gateway_;
  TemplateSet templates_;
  FrameSource& frames_;
  std::filesystem::path archive_dir_;
  Clock& clock_;
  Logger& logger_;
};

// Groups by episode.source_dataset in first-seen episode order. Parse failures
// are excluded from MAE and counted in parse_failure_rate; n counts scored
// predictions. Subsets without a scored prediction are dropped with a
// warning. Throws Error(kValidation) when a prediction's episode is unknown.
std::vector<SubsetResult> subset_mae(const std::vector<Prediction>& predictions,
                                     const std::vector<Episode>& episodes, Logger& logger = null_logger());

struct Leaderboard {
  std::vector<LeaderboardRow> rows;
  std::vector<std::string> subset_order;
  std::string generated_at;
  std::string config_digest;

  bool operator==(const Leaderboard&) const = default;
};

// Overall = unweighted mean of the subset MAEs; OXE = the same over every
// subset except RoboArena. Rows are sorted by (overall, model_id) and densely
// ranked. When subset_order is empty it is the first-seen order of subsets.
// Throws Error(kValidation) for no models or a model without subsets.
Leaderboard aggregate(const std::map<std::string, std::vector<SubsetResult>>& per_model,
                      std::vector<std::string> subset_order = {}, std::string config_digest = {},
                      std::string generated_at = {});

enum class LeaderboardFormat { kJson, kCsv, kMarkdown };
// Throws Error(kConfig) for an unknown format name.
LeaderboardFormat parse_leaderboard_format(std::string_view name);
std::string_view extension_for(LeaderboardFormat format);

std::string emit_leaderboard(const Leaderboard& board, LeaderboardFormat format);
nlohmann::json to_json(const Leaderboard& board);
Leaderboard leaderboard_from_json(const nlohmann::json& j);

// UTC ISO-8601 time; SOURCE_DATE_EPOCH wins over the clock when set.
std::string leaderboard_timestamp(Clock& clock = system_clock());

// Long-format table with header model_id,subset,n,mae[,parse_failure_rate].
// Rows keep file order per model.
std::map<std::string, std::vector<SubsetResult>> read_subset_results_csv(const std::filesystem::path& path);
// Subset names in first-seen order of the same file.
std::vector<std::string> subset_order_of_csv(const std::filesystem::path& path);

}  // namespace rewardkit
