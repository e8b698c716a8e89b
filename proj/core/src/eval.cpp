#include "rewardkit/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"

namespace rewardkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::optional<int> in_range(std::string_view digits) {
  if (digits.empty() || digits.size() > 3) return std::nullopt;
  const int v = std::stoi(std::string(digits));
  return is_valid_score(v) ? std::optional<int>(v) : std::nullopt;
}

std::optional<int> score_marker(std::string_view text) {
  constexpr std::string_view kMarker = "SCORE:";
  std::optional<int> found;
  for (auto pos = text.find(kMarker); pos != std::string_view::npos; pos = text.find(kMarker, pos + 1)) {
    if (pos > 0 && is_word(text[pos - 1])) continue;
    auto i = pos + kMarker.size();
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    const auto b = i;
    while (i < text.size() && is_digit(text[i])) ++i;
    if (i == b || (i < text.size() && (is_word(text[i]) || (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]))))) {
      continue;
    }
    if (auto v = in_range(text.substr(b, i - b))) found = v;
  }
  return found;
}

bool preceded_by_out_of(std::string_view text, std::size_t b) {
  auto i = b;
  while (i > 0 && std::isspace(static_cast<unsigned char>(text[i - 1]))) --i;
  if (i < 6) return false;
  std::string word(text.substr(i - 6, 6));
  for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (word != "out of") return false;
  return i == 6 || !is_word(text[i - 7]);
}

std::optional<int> last_standalone(std::string_view text) {
  std::optional<int> found;
  const auto n = text.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    const auto b = i;
    while (i < n && is_digit(text[i])) ++i;
    const auto e = i;
    const char before = b > 0 ? text[b - 1] : ' ';
    const char after = e < n ? text[e] : ' ';
    if (is_word(before) || is_word(after)) continue;
    if (before == '.' && b > 1 && is_digit(text[b - 2])) continue;           // fractional part
    if (after == '.' && e + 1 < n && is_digit(text[e + 1])) continue;        // integer part of a decimal
    if (before == '/') continue;                                            // "4/5"
    if (before == '-' && b > 1 && is_digit(text[b - 2])) continue;           // upper bound of "1-5"
    if (after == '-' && e + 1 < n && is_digit(text[e + 1])) continue;        // lower bound of "1-5"
    if (preceded_by_out_of(text, b)) continue;
    if (auto v = in_range(text.substr(b, e - b))) found = v;
  }
  return found;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string opt3(const std::optional<double>& v) { return v ? fixed3(*v) : std::string(); }

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::optional<int> parse_prediction(std::string_view raw_text) {
  if (auto v = score_marker(raw_text)) return v;
  return last_standalone(raw_text);
}

EvalHarness::EvalHarness(Gateway& gateway, TemplateSet templates, FrameSource& frames, fs::path archive_dir,
                         Clock& clock, Logger& logger)
    : gateway_(gateway),
      templates_(std::move(templates)),
      frames_(frames),
      archive_dir_(std::move(archive_dir)),
      clock_(clock),
      logger_(logger) {}

fs::path EvalHarness::archive_path(const fs::path& archive_dir, const std::string& model_id) {
  return archive_dir / (model_id + ".predictions.jsonl");
}

std::string EvalHarness::render_prompt(const Episode& episode) const {
  return render(templates_.get(Stage::kEvaluation),
                {{"TASK", episode.task_text}, {"RUBRIC", Rubric::standard().text()}});
}

std::vector<Prediction> EvalHarness::read_archive(const fs::path& path) {
  std::vector<Prediction> out;
  for (const auto& line : read_lines(path)) {
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::kValidation, "corrupt archive line in " + path.string());
    if (j.value("type", "") == "prediction") out.push_back(prediction_from_json(j));
  }
  return out;
}

std::vector<Prediction> EvalHarness::evaluate_model(const EvalJob& job) {
  const auto& profile = job.model_profile;
  const auto& model_id = profile.provider_id;
  if (model_id.empty()) throw Error(ErrorKind::kConfig, "model profile has no provider_id");
  if (job.concurrency < 1) throw Error(ErrorKind::kConfig, "eval concurrency must be positive");
  std::set<std::string, std::less<>> ids;
  for (const auto& e : job.benchmark) {
    if (e.split != Split::kTest) throw Error(ErrorKind::kPrecondition, "benchmark episode not in test split: " + e.id);
    if (job.require_verified && !e.verified) {
      throw Error(ErrorKind::kPrecondition, "benchmark episode not verified: " + e.id);
    }
    if (!ids.insert(e.id).second) throw Error(ErrorKind::kValidation, "duplicate benchmark episode " + e.id);
  }

  const auto& tmpl = templates_.get(Stage::kEvaluation);
  const json header = {{"type", "header"},
                       {"schema_version", kSchemaVersion},
                       {"model_id", model_id},
                       {"model", profile.model},
                       {"template_version", tmpl.version},
                       {"template_digest", tmpl.digest()},
                       {"template_note", "evaluation prompt is a reconstruction; rubric text is verbatim"}};

  const auto final_path = archive_path(archive_dir_, model_id);
  auto journal_path = final_path;
  journal_path += ".partial";

  // Earlier records produced under the same template.
  std::unordered_map<std::string, json> done;
  for (const auto& path : {final_path, journal_path}) {
    const auto records = Transcript::read(path);
    if (records.empty() || records.front().value("template_digest", "") != tmpl.digest()) continue;
    for (const auto& r : records) {
      if (r.value("type", "") == "prediction" && ids.contains(r.value("episode_id", ""))) {
        done[r.at("episode_id").get<std::string>()] = r;
      }
    }
  }

  std::error_code ec;
  fs::create_directories(archive_dir_, ec);
  std::ofstream journal(journal_path, std::ios::binary | std::ios::trunc);
  if (!journal) throw Error(ErrorKind::kIo, "cannot write " + journal_path.string());
  journal << header.dump() << '\n';
  for (const auto& e : job.benchmark) {
    if (auto it = done.find(e.id); it != done.end()) journal << it->second.dump() << '\n';
  }
  journal.flush();

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < job.benchmark.size(); ++i) {
    if (!done.contains(job.benchmark[i].id)) todo.push_back(i);
  }
  logger_.info("eval_start", {{"model_id", model_id},
                              {"episodes", job.benchmark.size()},
                              {"resumed", job.benchmark.size() - todo.size()}});

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;

  auto work = [&] {
    while (!stop && !(job.cancel && job.cancel->load())) {
      const auto slot = next.fetch_add(1);
      if (slot >= todo.size()) return;
      const auto& episode = job.benchmark[todo[slot]];
      Prediction p;
      p.model_id = model_id;
      p.episode_id = episode.id;
      json record;
      try {
        const auto prompt = render_prompt(episode);
        FrameSample frames;
        std::vector<fs::path> frame_refs;
        try {
          if (profile.modality == Modality::kVision) {
            frames = frames_.frames_for(episode.id, episode.video_ref, profile.max_frames);
            if (!frames.includes_final_frame) throw Error(ErrorKind::kMedia, "frame sample lacks the final frame");
            frame_refs = frames.frame_refs;
          }
        } catch (const Error& ex) {
          if (ex.kind() != ErrorKind::kMedia && ex.kind() != ErrorKind::kPrecondition) throw;
          p.status = "media_error";
          p.raw_text.clear();
          record = to_json(p);
          record["error"] = ex.what();
          logger_.warn("eval_media_error", {{"episode_id", episode.id}, {"error", ex.what()}});
        }
        if (p.status != "media_error") {
          ModelCall call;
          call.profile = profile;
          call.text = prompt;
          call.frames = frame_refs;
          call.template_id = "evaluation@v" + std::to_string(tmpl.version) + ":" + tmpl.digest();
          const auto rec = gateway_.call(call);
          p.latency_ms = rec.latency_ms;
          p.status = std::string(to_string(rec.status));
          p.raw_text = rec.response_text;
          if (rec.ok()) p.parsed_score = parse_prediction(rec.response_text);
          p.parse_failed = !p.parsed_score.has_value();
          record = to_json(p);
          if (!rec.ok()) record["error"] = rec.error;
        }
        record["type"] = "prediction";
        record["prompt"] = prompt;
        json names = json::array();
        for (const auto& f : frame_refs) names.push_back(f.filename().string());
        record["frames"] = names;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        return;
      }
      std::lock_guard lock(mu);
      journal << record.dump() << '\n';
      journal.flush();
      done[episode.id] = std::move(record);
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(job.concurrency), todo.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(work);
  if (workers > 0) work();
  for (auto& t : pool) t.join();
  journal.close();
  if (fatal) std::rethrow_exception(fatal);
  if (done.size() < ids.size()) {
    throw Error(ErrorKind::kStage, "evaluation of " + model_id + " interrupted after " + std::to_string(done.size()) +
                                       " of " + std::to_string(ids.size()) + " episodes; rerun to resume");
  }

  std::string archive = header.dump() + "\n";
  std::vector<Prediction> out;
  out.reserve(job.benchmark.size());
  for (const auto& e : job.benchmark) {
    const auto& r = done.at(e.id);
    archive += r.dump() + "\n";
    out.push_back(prediction_from_json(r));
  }
  write_file_atomic(final_path, archive);
  fs::remove(journal_path, ec);

  std::int64_t failed = 0;
  for (const auto& p : out) failed += p.parse_failed ? 1 : 0;
  logger_.info("eval_done", {{"model_id", model_id}, {"predictions", out.size()}, {"parse_failed", failed}});
  return out;
}

std::vector<SubsetResult> subset_mae(const std::vector<Prediction>& predictions, const std::vector<Episode>& episodes,
                                     Logger& logger) {
  std::unordered_map<std::string, const Episode*> by_id;
  std::vector<std::string> order;
  std::set<std::string, std::less<>> seen;
  for (const auto& e : episodes) {
    by_id[e.id] = &e;
    if (seen.insert(e.source_dataset).second) order.push_back(e.source_dataset);
  }
  std::map<std::string, std::vector<ScorePair>> pairs;
  std::map<std::string, std::int64_t> totals;
  std::map<std::string, std::int64_t> failures;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.episode_id);
    if (it == by_id.end()) throw Error(ErrorKind::kValidation, "prediction for unknown episode " + p.episode_id);
    const auto& subset = it->second->source_dataset;
    ++totals[subset];
    if (p.parse_failed || !p.parsed_score) {
      ++failures[subset];
    } else {
      pairs[subset].push_back({*p.parsed_score, it->second->score});
    }
  }
  std::vector<SubsetResult> out;
  for (const auto& subset : order) {
    if (!totals.contains(subset)) continue;
    const auto& scored = pairs[subset];
    if (scored.empty()) {
      logger.warn("subset_without_scores", {{"subset", subset}, {"predictions", totals[subset]}});
      continue;
    }
    SubsetResult r;
    r.subset = subset;
    r.n = static_cast<std::int64_t>(scored.size());
    r.mae = mae(scored);
    r.parse_failure_rate = static_cast<double>(failures[subset]) / static_cast<double>(totals[subset]);
    out.push_back(r);
  }
  return out;
}

Leaderboard aggregate(const std::map<std::string, std::vector<SubsetResult>>& per_model,
                      std::vector<std::string> subset_order, std::string config_digest, std::string generated_at) {
  if (per_model.empty()) throw Error(ErrorKind::kValidation, "aggregate needs at least one model");
  Leaderboard board;
  board.config_digest = std::move(config_digest);
  board.generated_at = std::move(generated_at);

  std::set<std::string, std::less<>> known(subset_order.begin(), subset_order.end());
  for (const auto& [model, results] : per_model) {
    if (results.empty()) throw Error(ErrorKind::kValidation, "model '" + model + "' has no subset results");
    LeaderboardRow row;
    row.model_id = model;
    double total = 0.0;
    double oxe_total = 0.0;
    int oxe_count = 0;
    for (const auto& r : results) {
      if (!row.per_subset.emplace(r.subset, r).second) {
        throw Error(ErrorKind::kValidation, "model '" + model + "' lists subset '" + r.subset + "' twice");
      }
      if (known.insert(r.subset).second) subset_order.push_back(r.subset);
      total += r.mae;
      if (r.subset == kRoboArenaSubset) {
        row.roboarena_mae = r.mae;
      } else {
        oxe_total += r.mae;
        ++oxe_count;
      }
    }
    row.overall_mae = total / static_cast<double>(results.size());
    if (oxe_count > 0) row.oxe_mae = oxe_total / oxe_count;
    board.rows.push_back(std::move(row));
  }
  std::sort(board.rows.begin(), board.rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.overall_mae != b.overall_mae) return a.overall_mae < b.overall_mae;
    return a.model_id < b.model_id;
  });
  int rank = 0;
  for (std::size_t i = 0; i < board.rows.size(); ++i) {
    if (i == 0 || board.rows[i].overall_mae != board.rows[i - 1].overall_mae) ++rank;
    board.rows[i].rank = rank;
  }
  board.subset_order = std::move(subset_order);
  return board;
}

LeaderboardFormat parse_leaderboard_format(std::string_view name) {
  if (name == "json") return LeaderboardFormat::kJson;
  if (name == "csv") return LeaderboardFormat::kCsv;
  if (name == "markdown" || name == "md") return LeaderboardFormat::kMarkdown;
  throw Error(ErrorKind::kConfig, "unknown leaderboard format '" + std::string(name) + "'");
}

std::string_view extension_for(LeaderboardFormat format) {
  switch (format) {
    case LeaderboardFormat::kJson: return "json";
    case LeaderboardFormat::kCsv: return "csv";
    case LeaderboardFormat::kMarkdown: return "md";
  }
  return "txt";
}

json to_json(const Leaderboard& board) {
  json rows = json::array();
  for (const auto& r : board.rows) {
    json subsets = json::array();
    for (const auto& name : board.subset_order) {
      if (auto it = r.per_subset.find(name); it != r.per_subset.end()) subsets.push_back(to_json(it->second));
    }
    rows.push_back({{"model_id", r.model_id},
                    {"rank", r.rank},
                    {"overall_mae", r.overall_mae},
                    {"oxe_mae", opt_json(r.oxe_mae)},
                    {"roboarena_mae", opt_json(r.roboarena_mae)},
                    {"per_subset", subsets}});
  }
  return {{"schema_version", kSchemaVersion},
          {"generated_at", board.generated_at},
          {"config_digest", board.config_digest},
          {"subset_order", board.subset_order},
          {"rows", rows}};
}

Leaderboard leaderboard_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw Error(ErrorKind::kValidation, "unsupported leaderboard schema_version");
    }
    Leaderboard board;
    board.generated_at = j.at("generated_at").get<std::string>();
    board.config_digest = j.at("config_digest").get<std::string>();
    board.subset_order = j.at("subset_order").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
      LeaderboardRow row;
      row.model_id = r.at("model_id").get<std::string>();
      row.rank = r.at("rank").get<int>();
      row.overall_mae = r.at("overall_mae").get<double>();
      row.oxe_mae = opt_from(r, "oxe_mae");
      row.roboarena_mae = opt_from(r, "roboarena_mae");
      for (const auto& s : r.at("per_subset")) {
        auto result = subset_result_from_json(s);
        row.per_subset[result.subset] = result;
      }
      board.rows.push_back(std::move(row));
    }
    return board;
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kValidation, std::string("bad leaderboard document: ") + ex.what());
  }
}

std::string emit_leaderboard(const Leaderboard& board, LeaderboardFormat format) {
  switch (format) {
    case LeaderboardFormat::kJson:
      return to_json(board).dump(2) + "\n";
    case LeaderboardFormat::kCsv: {
      std::string out = "rank,model_id,overall_mae,oxe_mae,roboarena_mae";
      for (const auto& s : board.subset_order) out += "," + csv_field(s);
      out += "\n";
      for (const auto& r : board.rows) {
        out += std::to_string(r.rank) + "," + csv_field(r.model_id) + "," + fixed3(r.overall_mae) + "," +
               opt3(r.oxe_mae) + "," + opt3(r.roboarena_mae);
        for (const auto& s : board.subset_order) {
          auto it = r.per_subset.find(s);
          out += "," + (it == r.per_subset.end() ? std::string() : fixed3(it->second.mae));
        }
        out += "\n";
      }
      return out;
    }
    case LeaderboardFormat::kMarkdown: {
      std::string out = "| Rank | Model | Overall | OXE | RoboArena |";
      std::string rule = "|---:|---|---:|---:|---:|";
      for (const auto& s : board.subset_order) {
        out += " " + md_cell(s) + " |";
        rule += "---:|";
      }
      out += "\n" + rule + "\n";
      for (const auto& r : board.rows) {
        out += "| " + std::to_string(r.rank) + " | " + md_cell(r.model_id) + " | " + fixed3(r.overall_mae) + " | " +
               opt3(r.oxe_mae) + " | " + opt3(r.roboarena_mae) + " |";
        for (const auto& s : board.subset_order) {
          auto it = r.per_subset.find(s);
          out += " " + (it == r.per_subset.end() ? std::string("-") : fixed3(it->second.mae)) + " |";
        }
        out += "\n";
      }
      return out;
    }
  }
  throw Error(ErrorKind::kConfig, "unknown leaderboard format");
}

std::string leaderboard_timestamp(Clock& clock) {
  std::time_t t = static_cast<std::time_t>(clock.now_ms() / 1000);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    char* end = nullptr;
    const auto v = std::strtoll(epoch, &end, 10);
    if (end && *end == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(ErrorKind::kValidation, "empty table " + path.string());
  CsvTable t;
  t.header = split_csv(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto row = split_csv(lines[i]);
    if (row.size() != t.header.size()) {
      throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(i + 1) + ": expected " +
                                              std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::size_t column(const CsvTable& t, std::string_view name, bool required = true) {
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == name) return i;
  }
  if (required) throw Error(ErrorKind::kValidation, "table lacks column '" + std::string(name) + "'");
  return t.header.size();
}

}  // namespace

std::map<std::string, std::vector<SubsetResult>> read_subset_results_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_model = column(t, "model_id");
  const auto c_subset = column(t, "subset");
  const auto c_n = column(t, "n");
  const auto c_mae = column(t, "mae");
  const auto c_rate = column(t, "parse_failure_rate", false);
  std::map<std::string, std::vector<SubsetResult>> out;
  for (const auto& row : t.rows) {
    json j = {{"subset", row[c_subset]}};
    try {
      j["n"] = std::stoll(row[c_n]);
      j["mae"] = std::stod(row[c_mae]);
      if (c_rate < row.size() && !row[c_rate].empty()) j["parse_failure_rate"] = std::stod(row[c_rate]);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kValidation, "non-numeric field for " + row[c_model] + "/" + row[c_subset]);
    }
    out[row[c_model]].push_back(subset_result_from_json(j));
  }
  return out;
}

std::vector<std::string> subset_order_of_csv(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_subset = column(t, "subset");
  std::vector<std::string> order;
  std::set<std::string, std::less<>> seen;
  for (const auto& row : t.rows) {
    if (seen.insert(row[c_subset]).second) order.push_back(row[c_subset]);
  }
  return order;
}

}  // namespace rewardkit
