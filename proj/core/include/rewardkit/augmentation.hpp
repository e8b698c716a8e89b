#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rewardkit/core_model.hpp"
#include "rewardkit/log.hpp"
#include "rewardkit/media.hpp"
#include "rewardkit/provider.hpp"
#include "rewardkit/templates.hpp"

namespace rewardkit {

// Provider profile used for each pipeline stage.
struct StageProfiles {
  std::map<Stage, ProviderProfile> by_stage;

  // Throws Error(kConfig) when the stage has no profile.
  const ProviderProfile& at(Stage stage) const;
  // Same profile for every stage; handy with a single mock provider.
  static StageProfiles uniform(const ProviderProfile& profile);
};

struct PipelineOptions {
  int max_ladder_attempts = 3;
  int command_reask_cap = 2;
  int plan_reask_cap = 1;
  int validation_reask_cap = 1;
  bool partial_acceptance = false;
  double frame_rate_hz = 1.0;
  int max_words = 25;
  ClipLadderSpec clip_spec;
  DecodingParams params;
  // Digest of the run config; stamped on transcript headers.
  std::string config_digest;
};

// Supplies sampled frames for a video. `key` names the output directory.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual FrameSample frames_for(const std::string& key, const std::string& video_ref,
                                 int max_frames) = 0;
};

// Samples with MediaOps into <work_root>/frames/<key>.
class MediaFrameSource final : public FrameSource {
 public:
  MediaFrameSource(const MediaOps& media, std::filesystem::path work_root, double rate_hz)
      : media_(media), work_root_(std::move(work_root)), rate_hz_(rate_hz) {}
  FrameSample frames_for(const std::string& key, const std::string& video_ref, int max_frames) override;

 private:
  const MediaOps& media_;
  std::filesystem::path work_root_;
  double rate_hz_;
};

// Lexical checks applied to every generated command.
class CommandGate {
 public:
  CommandGate(std::vector<std::string> verbs, int max_words = 25);

  // Empty string when the command passes, otherwise the reason it failed.
  std::string check(const std::string& command, const std::string& original_task,
                    const std::map<int, std::string>& history) const;

 private:
  std::set<std::string, std::less<>> verbs_;
  int max_words_;
};

struct ValidationVerdict {
  std::string video_ref;
  std::string task_text;
  int provided_score = 0;
  std::string reasoning_text;
  bool answer = false;
  bool parse_ok = false;
  int attempts = 0;
  std::string error;

  bool operator==(const ValidationVerdict&) const = default;
};

// Looks for lines that are exactly "ANSWER: TRUE" or "ANSWER: FALSE" once
// surrounding whitespace is trimmed; the last such line wins.
std::optional<bool> parse_validation_answer(const std::string& response);

enum class CommandStatus { kPending, kAccepted, kRejected };
enum class LadderStatus { kPending, kAccepted, kPartial, kFailed };
std::string_view to_string(CommandStatus status);
std::string_view to_string(LadderStatus status);

struct CounterfactualLadder {
  std::string parent_episode_id;
  std::string task_text;
  bool rewrite_warning = false;
  std::string analysis_text;
  std::string plan_text;
  std::map<int, std::string> commands;
  std::map<int, CommandStatus> validation;
  int attempts = 0;
  LadderStatus status = LadderStatus::kPending;
  std::string failure;

  bool operator==(const CounterfactualLadder&) const = default;
};

nlohmann::json to_json(const CounterfactualLadder& ladder);
CounterfactualLadder ladder_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidationVerdict& verdict);
ValidationVerdict verdict_from_json(const nlohmann::json& j);

struct CounterfactualResult {
  CounterfactualLadder ladder;
  std::vector<Episode> episodes;
  // Verdicts of the final attempt, keyed by score.
  std::map<int, ValidationVerdict> verdicts;
};

struct ClipResult {
  std::vector<ClipOutcome> outcomes;
  std::vector<ValidationVerdict> verdicts;
  std::vector<Episode> episodes;
};

std::string counterfactual_id(const std::string& parent_id, int score);
std::string clip_id(const std::string& parent_id, double fraction);

// Append-only JSONL record file for one ladder.
class Transcript {
 public:
  Transcript() = default;
  explicit Transcript(const std::filesystem::path& path);
  void append(const nlohmann::json& record);
  bool active() const { return out_.is_open(); }

  // Records of an existing transcript; empty when the file is missing.
  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::ofstream out_;
};

// Runs the relabeling and clipping ladders for score-5 episodes. Stages run
// in order within a ladder; independent episodes may run on separate threads
// sharing the gateway.
class AugmentationPipeline {
 public:
  AugmentationPipeline(Gateway& gateway, StageProfiles profiles, TemplateSet templates,
                       std::vector<std::string> verbs, PipelineOptions options,
                       std::filesystem::path work_root, FrameSource& frames,
                       Logger& logger = null_logger());

  // Stage operations. Each appends its calls to `transcript` when active.
  // rewrite_task returns the input unchanged and sets `warning` when the
  // provider reply is empty or the call fails.
  std::string rewrite_task(const std::string& task_text, bool& warning, Transcript* transcript = nullptr);
  // Throws Error(kPrecondition) when the sample lacks the final frame and
  // Error(kStage) on provider failure.
  std::string analyze_video(const Episode& episode, const FrameSample& frames, const std::string& task_text,
                            Transcript* transcript = nullptr);
  // Throws Error(kStage) "malformed plan" once the re-ask budget is spent.
  std::string plan_failure_modes(const std::string& task_text, const std::string& analysis_text,
                                 Transcript* transcript = nullptr);
  // Empty optional when every re-ask failed the gate. `round` separates
  // ladder attempts in the cache.
  std::optional<std::string> generate_command(const std::string& task_text, const std::string& plan_text,
                                              int score, const std::map<int, std::string>& history,
                                              int round = 0, Transcript* transcript = nullptr);
  ValidationVerdict validate_example(const FrameSample& frames, const std::string& task_text,
                                     int provided_score, int round = 0, Transcript* transcript = nullptr);

  // Requires episode.score == 5. A finished transcript for the same config
  // is reused without provider calls.
  CounterfactualResult run_counterfactual_pipeline(const Episode& episode);
  ClipResult run_clip_pipeline(const Episode& episode, const MediaOps& media);

  static std::filesystem::path transcript_path(const std::filesystem::path& work_root,
                                               const std::string& episode_id, bool clips = false);

  const CommandGate& gate() const { return gate_; }

 private:
  CallRecord ask(Stage stage, const std::string& prompt, const std::vector<std::filesystem::path>& frames,
                 int attempt, Transcript* transcript, const nlohmann::json& extra = {});

  Gateway& gateway_;
  StageProfiles profiles_;
  TemplateSet templates_;
  CommandGate gate_;
  PipelineOptions options_;
  std::filesystem::path work_root_;
  FrameSource& frames_;
  Logger& logger_;
};

}  // namespace rewardkit
