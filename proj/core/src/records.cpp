#include "rewardkit/records.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "rewardkit/error.hpp"

namespace rewardkit {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    throw Error(ErrorKind::kValidation, std::string("missing field '") + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kValidation, std::string("field '") + key + "' has wrong type");
  }
}

template <typename T>
T optional_field(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kValidation, std::string("field '") + key + "' has wrong type");
  }
}

}  // namespace

json to_json(const Episode& e) {
  json j = {
      {"schema_version", kSchemaVersion},
      {"id", e.id},
      {"dataset", e.source_dataset},
      {"video_ref", e.video_ref},
      {"task_text", e.task_text},
      {"score", e.score},
      {"split", e.split ? json(to_string(*e.split)) : json(nullptr)},
      {"provenance", to_string(e.provenance)},
      {"perspective", to_string(e.perspective)},
      {"embodiment", e.embodiment},
      {"verified", e.verified},
  };
  if (e.parent_id) j["parent_id"] = *e.parent_id;
  return j;
}

Episode episode_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kValidation, "episode record is not an object");
  Episode e;
  e.id = required<std::string>(j, "id");
  e.source_dataset = required<std::string>(j, "dataset");
  e.video_ref = required<std::string>(j, "video_ref");
  e.task_text = required<std::string>(j, "task_text");
  e.score = required<int>(j, "score");
  if (auto split = optional_field<std::string>(j, "split", ""); !split.empty()) {
    e.split = parse_split(split);
  }
  e.provenance = parse_provenance(required<std::string>(j, "provenance"));
  e.perspective = parse_perspective(optional_field<std::string>(j, "perspective", "unknown"));
  e.embodiment = optional_field<std::string>(j, "embodiment", "");
  if (auto parent = optional_field<std::string>(j, "parent_id", ""); !parent.empty()) {
    e.parent_id = parent;
  }
  e.verified = optional_field<bool>(j, "verified", false);
  check_episode(e);
  return e;
}

json to_json(const Prediction& p) {
  return {
      {"model_id", p.model_id},
      {"episode_id", p.episode_id},
      {"raw_text", p.raw_text},
      {"parsed_score", p.parsed_score ? json(*p.parsed_score) : json(nullptr)},
      {"parse_failed", p.parse_failed},
      {"latency_ms", p.latency_ms},
      {"status", p.status},
  };
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  p.model_id = required<std::string>(j, "model_id");
  p.episode_id = required<std::string>(j, "episode_id");
  p.raw_text = optional_field<std::string>(j, "raw_text", "");
  if (j.contains("parsed_score") && !j["parsed_score"].is_null()) {
    p.parsed_score = required<int>(j, "parsed_score");
    if (!is_valid_score(*p.parsed_score)) {
      throw Error(ErrorKind::kValidation, "parsed_score outside 1..5");
    }
  }
  p.parse_failed = !p.parsed_score.has_value();
  p.latency_ms = optional_field<std::int64_t>(j, "latency_ms", 0);
  p.status = optional_field<std::string>(j, "status", "ok");
  return p;
}

json to_json(const SubsetResult& r) {
  return {{"subset", r.subset},
          {"n", r.n},
          {"mae", r.mae},
          {"parse_failure_rate", r.parse_failure_rate}};
}

SubsetResult subset_result_from_json(const json& j) {
  SubsetResult r;
  r.subset = required<std::string>(j, "subset");
  r.n = required<std::int64_t>(j, "n");
  r.mae = required<double>(j, "mae");
  r.parse_failure_rate = optional_field<double>(j, "parse_failure_rate", 0.0);
  if (r.n <= 0) throw Error(ErrorKind::kValidation, "subset '" + r.subset + "' has n <= 0");
  if (r.mae < 0.0 || r.mae > 4.0) {
    throw Error(ErrorKind::kValidation, "subset '" + r.subset + "' mae outside [0,4]");
  }
  return r;
}

void write_episodes(const std::filesystem::path& path,
                    const std::vector<Episode>& episodes,
                    const std::string& config_digest) {
  std::string out;
  for (const auto& e : episodes) {
    json j = to_json(e);
    if (!config_digest.empty()) j["config_digest"] = config_digest;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) {
  std::vector<Episode> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    try {
      out.push_back(episode_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(line_no) +
                                              ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ex.kind(), path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw Error(ErrorKind::kIo, "read failed: " + path.string());
  return lines;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  static std::atomic<std::uint64_t> counter{0};
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw Error(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "rename to " + path.string() + ": " + ec.message());
}

}  // namespace rewardkit
