#include "rewardkit/augmentation.hpp"

#include <cmath>
#include <regex>
#include <sstream>

#include "rewardkit/error.hpp"
#include "rewardkit/ingestion.hpp"
#include "rewardkit/records.hpp"

namespace rewardkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kSpace = " \t\r\n";

std::string strip(std::string_view s) {
  const auto b = s.find_first_not_of(kSpace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kSpace);
  return std::string(s.substr(b, e - b + 1));
}

// Whitespace, then one layer of matching quotes, then whitespace again.
std::string strip_quoted(std::string_view s) {
  auto out = strip(s);
  if (out.size() >= 2) {
    const char q = out.front();
    if ((q == '"' || q == '\'' || q == '`') && out.back() == q) out = strip(out.substr(1, out.size() - 2));
  }
  return out;
}

std::string comparable(const std::string& s) {
  auto key = normalize_task_key(s);
  while (!key.empty() && (key.back() == '.' || key.back() == '!')) key.pop_back();
  return key;
}

std::string history_text(const std::map<int, std::string>& history) {
  if (history.empty()) return "(none)";
  std::string out;
  for (const auto& [score, command] : history) {
    if (!out.empty()) out += '\n';
    out += "Score " + std::to_string(score) + ": " + command;
  }
  return out;
}

bool has_plan_sections(const std::string& plan, int& missing) {
  for (int k = 1; k <= 5; ++k) {
    const std::regex header("(^|\\n)[ \\t#*]*" + std::to_string(k) + "\\)");
    if (!std::regex_search(plan, header)) {
      missing = k;
      return false;
    }
  }
  return true;
}

bool is_answer_line(const std::string& line, bool& value) {
  const auto t = strip(line);
  if (t == "ANSWER: TRUE") {
    value = true;
    return true;
  }
  if (t == "ANSWER: FALSE") {
    value = false;
    return true;
  }
  return false;
}

std::string without_answer_lines(const std::string& response) {
  std::istringstream in(response);
  std::string out;
  bool value = false;
  for (std::string line; std::getline(in, line);) {
    if (is_answer_line(line, value)) continue;
    out += line;
    out += '\n';
  }
  return strip(out);
}

json frame_names(const std::vector<fs::path>& frames) {
  json names = json::array();
  for (const auto& f : frames) names.push_back(f.filename().string());
  return names;
}

std::string relative_to(const std::string& path, const fs::path& root) {
  std::error_code ec;
  auto rel = fs::relative(path, root, ec);
  if (ec || rel.empty() || rel.string().rfind("..", 0) == 0) return path;
  return rel.generic_string();
}

json outcome_json(const ClipOutcome& o, const fs::path& work_root) {
  json j = {{"fraction", o.fraction}, {"proposed_score", o.proposed_score}, {"error", o.error}};
  if (o.variant) {
    j["clip"] = {{"parent_episode_id", o.variant->parent_episode_id},
                 {"end_time_s", o.variant->end_time_s},
                 {"clip_video_ref", relative_to(o.variant->clip_video_ref, work_root)},
                 {"frame_count", o.variant->frame_count}};
  }
  return j;
}

ClipOutcome outcome_from_json(const json& j, const fs::path& work_root) {
  ClipOutcome o;
  o.fraction = j.at("fraction").get<double>();
  o.proposed_score = j.at("proposed_score").get<int>();
  o.error = j.value("error", std::string());
  if (j.contains("clip")) {
    const auto& c = j.at("clip");
    ClipVariant v;
    v.parent_episode_id = c.at("parent_episode_id").get<std::string>();
    v.fraction = o.fraction;
    v.proposed_score = o.proposed_score;
    v.end_time_s = c.at("end_time_s").get<double>();
    fs::path ref = c.at("clip_video_ref").get<std::string>();
    v.clip_video_ref = ref.is_absolute() ? ref.string() : (work_root / ref).string();
    v.frame_count = c.at("frame_count").get<std::int64_t>();
    o.variant = std::move(v);
  }
  return o;
}

Episode child_of(const Episode& parent, std::string id, std::string task, int score, Provenance provenance,
                 std::string video_ref) {
  Episode e;
  e.id = std::move(id);
  e.source_dataset = parent.source_dataset;
  e.video_ref = std::move(video_ref);
  e.task_text = std::move(task);
  e.score = score;
  e.split = parent.split;
  e.provenance = provenance;
  e.perspective = parent.perspective;
  e.embodiment = parent.embodiment;
  e.parent_id = parent.id;
  return e;
}

// The finished result record of a transcript written under the same config.
std::optional<json> finished_result(const fs::path& path, const std::string& config_digest) {
  const auto records = Transcript::read(path);
  if (records.size() < 2) return std::nullopt;
  const auto& head = records.front();
  const auto& last = records.back();
  if (head.value("type", "") != "header" || last.value("type", "") != "result") return std::nullopt;
  if (head.value("config_digest", "") != config_digest) return std::nullopt;
  std::optional<json> out;
  out.emplace(last);
  return out;
}

}  // namespace

const ProviderProfile& StageProfiles::at(Stage stage) const {
  auto it = by_stage.find(stage);
  if (it == by_stage.end()) {
    throw Error(ErrorKind::kConfig, "no provider profile for stage " + std::string(to_string(stage)));
  }
  return it->second;
}

StageProfiles StageProfiles::uniform(const ProviderProfile& profile) {
  StageProfiles p;
  for (auto s : {Stage::kRewrite, Stage::kAnalysis, Stage::kPlanning, Stage::kCommandGeneration,
                 Stage::kValidation, Stage::kEvaluation}) {
    p.by_stage[s] = profile;
  }
  return p;
}

FrameSample MediaFrameSource::frames_for(const std::string& key, const std::string& video_ref, int max_frames) {
  return media_.sample_frames(video_ref, rate_hz_, max_frames, MediaOps::frames_dir(work_root_, key));
}

CommandGate::CommandGate(std::vector<std::string> verbs, int max_words) : max_words_(max_words) {
  for (auto& v : verbs) {
    auto key = normalize_task_key(v);
    if (!key.empty()) verbs_.insert(std::move(key));
  }
  if (verbs_.empty()) throw Error(ErrorKind::kConfig, "verb lexicon is empty");
}

std::string CommandGate::check(const std::string& command, const std::string& original_task,
                               const std::map<int, std::string>& history) const {
  if (command.empty()) return "empty command";
  if (command.find_first_of("\r\n") != std::string::npos) return "not a single line";
  for (unsigned char c : command) {
    if (c >= 0x80) return "non-ASCII character";
  }
  std::istringstream words(command);
  std::vector<std::string> tokens;
  for (std::string w; words >> w;) tokens.push_back(w);
  if (static_cast<int>(tokens.size()) > max_words_) {
    return std::to_string(tokens.size()) + " words exceeds " + std::to_string(max_words_);
  }
  std::string first;
  for (char c : tokens.front()) {
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '-') {
      first += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!verbs_.contains(first)) return "does not start with a known verb: '" + tokens.front() + "'";
  const auto key = comparable(command);
  if (key == comparable(original_task)) return "same as the original task";
  for (const auto& [score, previous] : history) {
    if (key == comparable(previous)) return "duplicate of score " + std::to_string(score);
  }
  return {};
}

std::optional<bool> parse_validation_answer(const std::string& response) {
  std::optional<bool> answer;
  std::istringstream in(response);
  bool value = false;
  for (std::string line; std::getline(in, line);) {
    if (is_answer_line(line, value)) answer = value;
  }
  return answer;
}

std::string_view to_string(CommandStatus status) {
  switch (status) {
    case CommandStatus::kPending: return "pending";
    case CommandStatus::kAccepted: return "accepted";
    case CommandStatus::kRejected: return "rejected";
  }
  return "pending";
}

std::string_view to_string(LadderStatus status) {
  switch (status) {
    case LadderStatus::kPending: return "pending";
    case LadderStatus::kAccepted: return "accepted";
    case LadderStatus::kPartial: return "partial";
    case LadderStatus::kFailed: return "failed";
  }
  return "pending";
}

namespace {

CommandStatus parse_command_status(const std::string& s) {
  for (auto v : {CommandStatus::kPending, CommandStatus::kAccepted, CommandStatus::kRejected}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::kValidation, "unknown command status '" + s + "'");
}

LadderStatus parse_ladder_status(const std::string& s) {
  for (auto v : {LadderStatus::kPending, LadderStatus::kAccepted, LadderStatus::kPartial, LadderStatus::kFailed}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::kValidation, "unknown ladder status '" + s + "'");
}

}  // namespace

json to_json(const CounterfactualLadder& l) {
  json commands = json::object();
  for (const auto& [k, c] : l.commands) commands[std::to_string(k)] = c;
  json validation = json::object();
  for (const auto& [k, v] : l.validation) validation[std::to_string(k)] = to_string(v);
  return {{"parent_episode_id", l.parent_episode_id},
          {"task_text", l.task_text},
          {"rewrite_warning", l.rewrite_warning},
          {"analysis_text", l.analysis_text},
          {"plan_text", l.plan_text},
          {"commands", commands},
          {"validation", validation},
          {"attempts", l.attempts},
          {"status", to_string(l.status)},
          {"failure", l.failure}};
}

CounterfactualLadder ladder_from_json(const json& j) {
  try {
    CounterfactualLadder l;
    l.parent_episode_id = j.at("parent_episode_id").get<std::string>();
    l.task_text = j.at("task_text").get<std::string>();
    l.rewrite_warning = j.at("rewrite_warning").get<bool>();
    l.analysis_text = j.at("analysis_text").get<std::string>();
    l.plan_text = j.at("plan_text").get<std::string>();
    for (const auto& [k, c] : j.at("commands").items()) l.commands[std::stoi(k)] = c.get<std::string>();
    for (const auto& [k, v] : j.at("validation").items()) {
      l.validation[std::stoi(k)] = parse_command_status(v.get<std::string>());
    }
    l.attempts = j.at("attempts").get<int>();
    l.status = parse_ladder_status(j.at("status").get<std::string>());
    l.failure = j.at("failure").get<std::string>();
    return l;
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kValidation, std::string("bad ladder record: ") + ex.what());
  }
}

json to_json(const ValidationVerdict& v) {
  return {{"video_ref", v.video_ref},           {"task_text", v.task_text}, {"provided_score", v.provided_score},
          {"reasoning_text", v.reasoning_text}, {"answer", v.answer ? "TRUE" : "FALSE"},
          {"parse_ok", v.parse_ok},             {"attempts", v.attempts},   {"error", v.error}};
}

ValidationVerdict verdict_from_json(const json& j) {
  try {
    ValidationVerdict v;
    v.video_ref = j.at("video_ref").get<std::string>();
    v.task_text = j.at("task_text").get<std::string>();
    v.provided_score = j.at("provided_score").get<int>();
    v.reasoning_text = j.at("reasoning_text").get<std::string>();
    const auto answer = j.at("answer").get<std::string>();
    if (answer != "TRUE" && answer != "FALSE") throw Error(ErrorKind::kValidation, "bad verdict answer");
    v.answer = answer == "TRUE";
    v.parse_ok = j.at("parse_ok").get<bool>();
    v.attempts = j.value("attempts", 0);
    v.error = j.value("error", std::string());
    return v;
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kValidation, std::string("bad verdict record: ") + ex.what());
  }
}

std::string counterfactual_id(const std::string& parent_id, int score) {
  return parent_id + "#cf" + std::to_string(score);
}

std::string clip_id(const std::string& parent_id, double fraction) {
  return parent_id + "#clip" + std::to_string(std::lround(fraction * 100.0));
}

Transcript::Transcript(const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorKind::kIo, "cannot write transcript " + path.string());
}

void Transcript::append(const json& record) {
  if (!out_.is_open()) return;
  out_ << record.dump() << '\n';
  out_.flush();
}

std::vector<json> Transcript::read(const fs::path& path) {
  std::vector<json> out;
  std::error_code ec;
  if (!fs::exists(path, ec)) return out;
  for (const auto& line : read_lines(path)) {
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) break;  // torn tail from an interrupted run
    out.push_back(std::move(j));
  }
  return out;
}

AugmentationPipeline::AugmentationPipeline(Gateway& gateway, StageProfiles profiles, TemplateSet templates,
                                           std::vector<std::string> verbs, PipelineOptions options,
                                           fs::path work_root, FrameSource& frames, Logger& logger)
    : gateway_(gateway),
      profiles_(std::move(profiles)),
      templates_(std::move(templates)),
      gate_(verbs.empty() ? builtin_verb_lexicon() : std::move(verbs), options.max_words),
      options_(std::move(options)),
      work_root_(std::move(work_root)),
      frames_(frames),
      logger_(logger) {
  if (options_.max_ladder_attempts < 1 || options_.command_reask_cap < 0 || options_.plan_reask_cap < 0 ||
      options_.validation_reask_cap < 0) {
    throw Error(ErrorKind::kConfig, "pipeline attempt caps must be non-negative and max_ladder_attempts >= 1");
  }
  options_.clip_spec.check();
}

fs::path AugmentationPipeline::transcript_path(const fs::path& work_root, const std::string& episode_id,
                                               bool clips) {
  return work_root / "transcripts" / (episode_id + (clips ? ".clips.jsonl" : ".jsonl"));
}

CallRecord AugmentationPipeline::ask(Stage stage, const std::string& prompt, const std::vector<fs::path>& frames,
                                     int attempt, Transcript* transcript, const json& extra) {
  const auto& tmpl = templates_.get(stage);
  ModelCall call;
  call.profile = profiles_.at(stage);
  call.text = prompt;
  call.frames = frames;
  call.params = options_.params;
  call.template_id = std::string(to_string(stage)) + "@v" + std::to_string(tmpl.version) + ":" + tmpl.digest();
  call.attempt = attempt;
  auto rec = gateway_.call(call);
  if (transcript) {
    json r = {{"type", "call"},
              {"stage", to_string(stage)},
              {"attempt", attempt},
              {"provider_id", call.profile.provider_id},
              {"template_version", tmpl.version},
              {"template_digest", tmpl.digest()},
              {"frames", frame_names(frames)},
              {"prompt", prompt},
              {"status", to_string(rec.status)},
              {"response", rec.response_text},
              {"error", rec.error}};
    if (extra.is_object()) r.update(extra);
    transcript->append(r);
  }
  return rec;
}

std::string AugmentationPipeline::rewrite_task(const std::string& task_text, bool& warning, Transcript* t) {
  warning = false;
  if (strip(task_text).empty()) throw Error(ErrorKind::kPrecondition, "rewrite needs a non-empty task");
  const auto prompt = render(templates_.get(Stage::kRewrite), {{"TASK", task_text}});
  const auto rec = ask(Stage::kRewrite, prompt, {}, 0, t);
  auto text = rec.ok() ? strip_quoted(rec.response_text) : std::string();
  if (text.empty()) {
    warning = true;
    logger_.warn("rewrite_passthrough", {{"reason", rec.ok() ? "empty reply" : rec.error}});
    return task_text;
  }
  return text;
}

std::string AugmentationPipeline::analyze_video(const Episode& episode, const FrameSample& frames,
                                                const std::string& task_text, Transcript* t) {
  if (frames.frame_refs.empty() || !frames.includes_final_frame) {
    throw Error(ErrorKind::kPrecondition, "frame sample for " + episode.id + " lacks the final frame");
  }
  const auto prompt = render(templates_.get(Stage::kAnalysis), {{"ORIGINAL_TASK", task_text}});
  const auto rec = ask(Stage::kAnalysis, prompt, frames.frame_refs, 0, t);
  if (!rec.ok()) throw Error(ErrorKind::kStage, "video analysis failed: " + rec.error);
  if (strip(rec.response_text).empty()) throw Error(ErrorKind::kStage, "video analysis is empty");
  return rec.response_text;
}

std::string AugmentationPipeline::plan_failure_modes(const std::string& task_text, const std::string& analysis_text,
                                                     Transcript* t) {
  if (strip(analysis_text).empty()) throw Error(ErrorKind::kPrecondition, "planning needs a video analysis");
  const auto prompt = render(templates_.get(Stage::kPlanning), {{"ORIGINAL_TASK", task_text},
                                                                {"VIDEO_ANALYSIS", analysis_text},
                                                                {"RUBRIC", Rubric::standard().text()}});
  int missing = 0;
  for (int reask = 0; reask <= options_.plan_reask_cap; ++reask) {
    const auto rec = ask(Stage::kPlanning, prompt, {}, reask, t);
    if (!rec.ok()) throw Error(ErrorKind::kStage, "planning failed: " + rec.error);
    if (has_plan_sections(rec.response_text, missing)) return rec.response_text;
    logger_.warn("malformed_plan", {{"missing_section", missing}, {"reask", reask}});
  }
  throw Error(ErrorKind::kStage, "malformed plan: section " + std::to_string(missing) + ") missing after " +
                                     std::to_string(options_.plan_reask_cap + 1) + " attempts");
}

std::optional<std::string> AugmentationPipeline::generate_command(const std::string& task_text,
                                                                  const std::string& plan_text, int score,
                                                                  const std::map<int, std::string>& history,
                                                                  int round, Transcript* t) {
  if (score < 1 || score > 4) throw Error(ErrorKind::kRange, "command score must be 1..4");
  for (int k = 1; k < score; ++k) {
    if (!history.contains(k)) {
      throw Error(ErrorKind::kPrecondition, "history lacks score " + std::to_string(k));
    }
  }
  const auto prompt = render(templates_.get(Stage::kCommandGeneration),
                             {{"ORIGINAL_TASK", task_text},
                              {"RUBRIC", Rubric::standard().text()},
                              {"PLAN_TEXT", plan_text},
                              {"HISTORY", history_text(history)},
                              {"K", std::to_string(score)}});
  const int tries = options_.command_reask_cap + 1;
  for (int reask = 0; reask < tries; ++reask) {
    const auto rec = ask(Stage::kCommandGeneration, prompt, {}, round * tries + reask, t, {{"score", score}});
    std::string reason;
    std::string command;
    if (!rec.ok()) {
      reason = "provider: " + rec.error;
    } else {
      command = strip_quoted(rec.response_text);
      reason = gate_.check(command, task_text, history);
    }
    if (t) t->append({{"type", "gate"}, {"score", score}, {"attempt", round * tries + reask}, {"reason", reason}});
    if (reason.empty()) return command;
    logger_.warn("command_gate", {{"score", score}, {"reason", reason}});
  }
  return std::nullopt;
}

ValidationVerdict AugmentationPipeline::validate_example(const FrameSample& frames, const std::string& task_text,
                                                         int provided_score, int round, Transcript* t) {
  if (frames.frame_refs.empty() || !frames.includes_final_frame) {
    throw Error(ErrorKind::kPrecondition, "validation frames for " + frames.video_ref + " lack the final frame");
  }
  ValidationVerdict v;
  v.video_ref = frames.video_ref;
  v.task_text = task_text;
  v.provided_score = provided_score;
  const auto prompt = render(templates_.get(Stage::kValidation), {{"TASK_DESCRIPTION", task_text},
                                                                  {"PROVIDED_SCORE", std::to_string(provided_score)}});
  const int tries = options_.validation_reask_cap + 1;
  for (int reask = 0; reask < tries; ++reask) {
    const auto rec = ask(Stage::kValidation, prompt, frames.frame_refs, round * tries + reask, t,
                         {{"score", provided_score}});
    ++v.attempts;
    if (!rec.ok()) {
      v.error = rec.error;
      break;
    }
    v.reasoning_text = without_answer_lines(rec.response_text);
    if (auto answer = parse_validation_answer(rec.response_text)) {
      v.answer = *answer;
      v.parse_ok = true;
      v.error.clear();
      break;
    }
    v.error = "no answer line";
  }
  if (t) t->append({{"type", "verdict"}, {"round", round}, {"verdict", to_json(v)}});
  return v;
}

CounterfactualResult AugmentationPipeline::run_counterfactual_pipeline(const Episode& episode) {
  if (episode.score != kMaxScore) {
    throw Error(ErrorKind::kPrecondition, "counterfactual ladder requires a score-5 episode: " + episode.id);
  }
  const auto path = transcript_path(work_root_, episode.id);
  CounterfactualResult result;
  if (auto done = finished_result(path, options_.config_digest)) {
    result.ladder = ladder_from_json(done->at("ladder"));
    for (const auto& e : done->at("episodes")) result.episodes.push_back(episode_from_json(e));
    for (const auto& [k, v] : done->at("verdicts").items()) result.verdicts[std::stoi(k)] = verdict_from_json(v);
    logger_.info("ladder_resumed", {{"episode_id", episode.id}});
    return result;
  }

  Transcript t(path);
  t.append({{"type", "header"},
            {"mode", "counterfactual"},
            {"episode_id", episode.id},
            {"task_text", episode.task_text},
            {"template_version", templates_.version()},
            {"config_digest", options_.config_digest}});

  auto& ladder = result.ladder;
  ladder.parent_episode_id = episode.id;
  for (int k = 1; k <= 4; ++k) ladder.validation[k] = CommandStatus::kPending;

  auto finish = [&] {
    json episodes = json::array();
    for (const auto& e : result.episodes) episodes.push_back(to_json(e));
    json verdicts = json::object();
    for (const auto& [k, v] : result.verdicts) verdicts[std::to_string(k)] = to_json(v);
    t.append({{"type", "result"}, {"ladder", to_json(ladder)}, {"episodes", episodes}, {"verdicts", verdicts}});
    logger_.info("ladder_done", {{"episode_id", episode.id},
                                 {"status", to_string(ladder.status)},
                                 {"attempts", ladder.attempts},
                                 {"emitted", result.episodes.size()}});
    return result;
  };

  ladder.task_text = rewrite_task(episode.task_text, ladder.rewrite_warning, &t);
  FrameSample frames;
  try {
    frames = frames_.frames_for(episode.id, episode.video_ref, profiles_.at(Stage::kAnalysis).max_frames);
    ladder.analysis_text = analyze_video(episode, frames, ladder.task_text, &t);
    ladder.plan_text = plan_failure_modes(ladder.task_text, ladder.analysis_text, &t);
    if (profiles_.at(Stage::kValidation).max_frames != profiles_.at(Stage::kAnalysis).max_frames) {
      frames = frames_.frames_for(episode.id, episode.video_ref, profiles_.at(Stage::kValidation).max_frames);
    }
  } catch (const Error& ex) {
    if (ex.kind() == ErrorKind::kConfig || ex.kind() == ErrorKind::kIo) throw;
    ladder.status = LadderStatus::kFailed;
    ladder.failure = ex.what();
    return finish();
  }

  std::string last_problem;
  for (int round = 0; round < options_.max_ladder_attempts; ++round) {
    ladder.attempts = round + 1;
    ladder.commands.clear();
    result.verdicts.clear();
    for (int k = 1; k <= 4; ++k) ladder.validation[k] = CommandStatus::kPending;

    std::map<int, std::string> history;
    for (int k = 1; k <= 4; ++k) {
      auto command = generate_command(ladder.task_text, ladder.plan_text, k, history, round, &t);
      if (!command) {
        ladder.validation[k] = CommandStatus::kRejected;
        last_problem = "score " + std::to_string(k) + " command failed the lexical gate";
        break;
      }
      history[k] = *command;
    }
    ladder.commands = history;

    bool all_accepted = ladder.commands.size() == 4;
    for (const auto& [k, command] : ladder.commands) {
      auto verdict = validate_example(frames, command, k, round, &t);
      ladder.validation[k] = verdict.answer ? CommandStatus::kAccepted : CommandStatus::kRejected;
      if (!verdict.answer) {
        all_accepted = false;
        last_problem = "score " + std::to_string(k) + " rejected by validation";
      }
      result.verdicts[k] = std::move(verdict);
    }
    if (all_accepted) {
      ladder.status = LadderStatus::kAccepted;
      break;
    }
  }

  if (ladder.status != LadderStatus::kAccepted) {
    ladder.failure = last_problem + " after " + std::to_string(ladder.attempts) + " attempts";
    bool any = false;
    for (const auto& [k, s] : ladder.validation) any = any || s == CommandStatus::kAccepted;
    ladder.status = options_.partial_acceptance && any ? LadderStatus::kPartial : LadderStatus::kFailed;
  }
  if (ladder.status != LadderStatus::kFailed) {
    for (const auto& [k, command] : ladder.commands) {
      if (ladder.validation[k] != CommandStatus::kAccepted) continue;
      result.episodes.push_back(child_of(episode, counterfactual_id(episode.id, k), command, k,
                                         Provenance::kCounterfactual, episode.video_ref));
    }
  }
  return finish();
}

ClipResult AugmentationPipeline::run_clip_pipeline(const Episode& episode, const MediaOps& media) {
  if (episode.score != kMaxScore || episode.parent_id) {
    throw Error(ErrorKind::kPrecondition, "clip ladder requires an original score-5 episode: " + episode.id);
  }
  const auto path = transcript_path(work_root_, episode.id, true);
  ClipResult result;
  if (auto done = finished_result(path, options_.config_digest)) {
    for (const auto& o : done->at("outcomes")) result.outcomes.push_back(outcome_from_json(o, work_root_));
    for (const auto& v : done->at("verdicts")) result.verdicts.push_back(verdict_from_json(v));
    for (const auto& e : done->at("episodes")) result.episodes.push_back(episode_from_json(e));
    logger_.info("clips_resumed", {{"episode_id", episode.id}});
    return result;
  }

  Transcript t(path);
  t.append({{"type", "header"},
            {"mode", "clip"},
            {"episode_id", episode.id},
            {"task_text", episode.task_text},
            {"template_version", templates_.version()},
            {"config_digest", options_.config_digest}});

  result.outcomes = media.make_clip_ladder(episode, work_root_, options_.clip_spec);
  const int max_frames = profiles_.at(Stage::kValidation).max_frames;
  for (const auto& outcome : result.outcomes) {
    t.append({{"type", "clip"}, {"outcome", outcome_json(outcome, work_root_)}});
    if (!outcome.variant) continue;
    const auto id = clip_id(episode.id, outcome.fraction);
    const auto& ref = outcome.variant->clip_video_ref;
    try {
      auto frames = frames_.frames_for(id, ref, max_frames);
      auto verdict = validate_example(frames, episode.task_text, outcome.proposed_score, 0, &t);
      if (verdict.answer) {
        result.episodes.push_back(
            child_of(episode, id, episode.task_text, outcome.proposed_score, Provenance::kClipped, ref));
      }
      result.verdicts.push_back(std::move(verdict));
    } catch (const Error& ex) {
      if (ex.kind() == ErrorKind::kConfig || ex.kind() == ErrorKind::kIo) throw;
      logger_.warn("clip_validation_failed", {{"episode_id", id}, {"error", ex.what()}});
      t.append({{"type", "clip_error"}, {"episode_id", id}, {"error", ex.what()}});
    }
  }

  json outcomes = json::array();
  for (const auto& o : result.outcomes) outcomes.push_back(outcome_json(o, work_root_));
  json verdicts = json::array();
  for (const auto& v : result.verdicts) verdicts.push_back(to_json(v));
  json episodes = json::array();
  for (const auto& e : result.episodes) episodes.push_back(to_json(e));
  t.append({{"type", "result"}, {"outcomes", outcomes}, {"verdicts", verdicts}, {"episodes", episodes}});
  logger_.info("clips_done", {{"episode_id", episode.id}, {"emitted", result.episodes.size()}});
  return result;
}

}  // namespace rewardkit
