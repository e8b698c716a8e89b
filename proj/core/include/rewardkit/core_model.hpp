#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace rewardkit {

enum class Split { kTrain, kVal, kTest };
enum class Provenance { kDemonstration, kOrganic, kCounterfactual, kClipped };
enum class Perspective { kExocentric, kEgocentric, kUnknown };

std::string_view to_string(Split split);
std::string_view to_string(Provenance provenance);
std::string_view to_string(Perspective perspective);

// Parsers throw Error(kValidation) on unknown names.
Split parse_split(std::string_view name);
Provenance parse_provenance(std::string_view name);
Perspective parse_perspective(std::string_view name);

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;

constexpr bool is_valid_score(int score) {
  return score >= kMinScore && score <= kMaxScore;
}

// One scored rollout: a video, the instruction it is judged against, and a
// discrete end-of-episode progress score.
struct Episode {
  std::string id;
  std::string source_dataset;
  std::string video_ref;
  std::string task_text;
  int score = kMaxScore;
  std::optional<Split> split;
  Provenance provenance = Provenance::kDemonstration;
  Perspective perspective = Perspective::kUnknown;
  std::string embodiment;
  // Set on augmented children; they inherit the parent's split.
  std::optional<std::string> parent_id;
  bool verified = false;

  bool operator==(const Episode&) const = default;
};

// Throws Error(kValidation) naming the first violated invariant.
void check_episode(const Episode& episode);

struct RubricLevel {
  int score;
  std::string_view name;
  std::string_view criterion;
};

// The five-level end-of-episode progress rubric used by every prompt.
class Rubric {
 public:
  static const Rubric& standard();

  std::span<const RubricLevel> levels() const { return levels_; }
  const RubricLevel& level(int score) const;

  // Header line followed by one "<score> - <name>: <criterion>" line per
  // level, no trailing newline.
  std::string text() const;

 private:
  Rubric();
  std::array<RubricLevel, 5> levels_;
};

struct Prediction {
  std::string model_id;
  std::string episode_id;
  std::string raw_text;
  std::optional<int> parsed_score;
  bool parse_failed = true;
  std::int64_t latency_ms = 0;
  // Provider status of the underlying call ("ok", "provider_error", ...).
  std::string status = "ok";

  bool operator==(const Prediction&) const = default;
};

struct SubsetResult {
  std::string subset;
  std::int64_t n = 0;
  double mae = 0.0;
  double parse_failure_rate = 0.0;

  bool operator==(const SubsetResult&) const = default;
};

struct LeaderboardRow {
  std::string model_id;
  double overall_mae = 0.0;
  std::optional<double> roboarena_mae;
  std::optional<double> oxe_mae;
  std::map<std::string, SubsetResult> per_subset;
  int rank = 0;

  bool operator==(const LeaderboardRow&) const = default;
};

struct ScorePair {
  int predicted;
  int truth;
};

// Mean absolute error over (predicted, truth) pairs. Throws Error(kValidation)
// "no scored pairs" on empty input and Error(kRange) on scores outside 1..5.
double mae(std::span<const ScorePair> pairs);

// Equal-width bins over [0,1]; the top bin is closed at 1.0.
int discretize_progress(double progress);

// Human progress score in [0,100] to the 1..5 scale.
int map_roboarena_score(int score);

}  // namespace rewardkit
