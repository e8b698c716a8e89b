#include "rewardkit/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "rewardkit/digest.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"
#include "rewardkit/sampling.hpp"

namespace rewardkit {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool looks_like_uri(std::string_view ref) {
  return ref.find("://") != std::string_view::npos;
}

const std::set<std::string, std::less<>> kKnownFields = {
    "schema_version", "dataset", "id", "video_ref", "task_text",
    "raw_score", "embodiment", "perspective"};

// Parses one manifest record; throws Error(kValidation) with the reason.
RawEntry parse_entry(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kValidation, "record is not an object");
  auto str = [&](const char* key, bool required) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw Error(ErrorKind::kValidation, std::string("missing field '") + key + "'");
      return {};
    }
    if (!it->is_string()) {
      throw Error(ErrorKind::kValidation, std::string("field '") + key + "' is not a string");
    }
    return it->get<std::string>();
  };
  RawEntry e;
  e.id = str("id", true);
  if (e.id.empty()) throw Error(ErrorKind::kValidation, "empty id");
  e.video_ref = str("video_ref", true);
  if (e.video_ref.empty()) throw Error(ErrorKind::kValidation, "empty video_ref");
  e.task_text = str("task_text", true);
  if (trim(e.task_text).empty()) throw Error(ErrorKind::kValidation, "empty task_text");
  if (auto it = j.find("raw_score"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) {
      throw Error(ErrorKind::kValidation, "raw_score is not an integer");
    }
    e.raw_score = it->get<int>();
  }
  e.embodiment = str("embodiment", false);
  e.perspective = parse_perspective(str("perspective", false));
  for (const auto& [key, value] : j.items()) {
    if (!kKnownFields.contains(key)) e.extra[key] = value;
  }
  if (!looks_like_uri(e.video_ref)) {
    std::error_code ec;
    e.video_missing = !std::filesystem::exists(e.video_ref, ec);
  }
  return e;
}

json entry_to_json(const RawEntry& e, const std::string& dataset, int schema_version) {
  json j = e.extra;
  j["schema_version"] = schema_version;
  j["dataset"] = dataset;
  j["id"] = e.id;
  j["video_ref"] = e.video_ref;
  j["task_text"] = e.task_text;
  if (e.raw_score) j["raw_score"] = *e.raw_score;
  if (!e.embodiment.empty()) j["embodiment"] = e.embodiment;
  j["perspective"] = to_string(e.perspective);
  return j;
}

}  // namespace

LoadedManifest load_manifest(const std::filesystem::path& path, bool require_entries) {
  const auto lines = read_lines(path);
  LoadedManifest out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    Rejection rej{path.string(), line_no, {}, {}, line};
    try {
      const json j = json::parse(line);
      auto version = j.find("schema_version");
      if (version == j.end() || !version->is_number_integer()) {
        throw Error(ErrorKind::kValidation, "missing field 'schema_version'");
      }
      if (version->get<int>() != kSchemaVersion) {
        throw Error(ErrorKind::kValidation,
                    "unsupported schema_version " + std::to_string(version->get<int>()));
      }
      auto dataset = j.find("dataset");
      if (dataset == j.end() || !dataset->is_string() || dataset->get<std::string>().empty()) {
        throw Error(ErrorKind::kValidation, "missing field 'dataset'");
      }
      RawEntry entry = parse_entry(j);
      rej.id = entry.id;
      if (out.manifest.dataset_name.empty()) {
        out.manifest.dataset_name = dataset->get<std::string>();
      } else if (dataset->get<std::string>() != out.manifest.dataset_name) {
        throw Error(ErrorKind::kValidation, "dataset '" + dataset->get<std::string>() +
                                                "' differs from '" +
                                                out.manifest.dataset_name + "'");
      }
      if (!seen.insert(entry.id).second) {
        throw Error(ErrorKind::kValidation, "duplicate id '" + entry.id + "'");
      }
      out.manifest.entries.push_back(std::move(entry));
    } catch (const json::exception& ex) {
      rej.reason = std::string("malformed record: ") + ex.what();
      out.rejections.push_back(std::move(rej));
    } catch (const Error& ex) {
      rej.reason = ex.what();
      out.rejections.push_back(std::move(rej));
    }
  }
  out.manifest.schema_version = kSchemaVersion;
  if (require_entries && out.manifest.entries.empty()) {
    throw Error(ErrorKind::kValidation, "empty manifest: " + path.string());
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    out += entry_to_json(e, manifest.dataset_name, manifest.schema_version).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_rejections(const std::filesystem::path& path, std::span<const Rejection> rejections) {
  std::string out;
  for (const auto& r : rejections) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["source"] = r.source;
    j["line"] = r.line;
    if (!r.id.empty()) j["id"] = r.id;
    j["reason"] = r.reason;
    j["record"] = r.record;
    out += j.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  write_file_atomic(path, out);
}

Manifest subsample(const Manifest& manifest, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw Error(ErrorKind::kConfig, "subsample cap must be >= 1");
  if (manifest.entries.size() <= cap) return manifest;
  auto rng = SampleRng::for_name(seed, manifest.dataset_name);
  Manifest out;
  out.dataset_name = manifest.dataset_name;
  out.schema_version = manifest.schema_version;
  out.entries.reserve(cap);
  for (auto i : sample_indices(manifest.entries.size(), cap, rng)) {
    out.entries.push_back(manifest.entries[i]);
  }
  return out;
}

NormalizedEntries normalize_entries(const Manifest& manifest) {
  NormalizedEntries out;
  for (const auto& entry : manifest.entries) {
    Episode e;
    e.id = entry.id;
    e.source_dataset = manifest.dataset_name;
    e.video_ref = entry.video_ref;
    e.task_text = trim(entry.task_text);
    e.perspective = entry.perspective;
    e.embodiment = entry.embodiment;
    if (!entry.raw_score) {
      e.score = kMaxScore;
      e.provenance = Provenance::kDemonstration;
    } else {
      try {
        e.score = map_roboarena_score(*entry.raw_score);
      } catch (const Error& ex) {
        out.rejections.push_back(Rejection{manifest.dataset_name, 0, entry.id, ex.what(),
                                           entry_to_json(entry, manifest.dataset_name,
                                                         manifest.schema_version)
                                               .dump()});
        continue;
      }
      e.provenance = Provenance::kOrganic;
    }
    out.episodes.push_back(std::move(e));
  }
  return out;
}

std::vector<Episode> canonicalize(std::vector<Episode> episodes) {
  for (auto& e : episodes) {
    e.task_text = trim(e.task_text);
    check_episode(e);
  }
  return episodes;
}

std::string normalize_task_key(std::string_view task_text) {
  std::string out;
  out.reserve(task_text.size());
  bool pending_space = false;
  for (unsigned char c : task_text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty() || sum <= 0.0) return out;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += out[i];
    remainders.emplace_back(quota - std::floor(quota), i);
  }
  // Largest fractional part first; ties go to the earlier index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
    ++out[remainders[k % remainders.size()].second];
  }
  return out;
}

namespace {

constexpr Split kSplitOrder[] = {Split::kTrain, Split::kVal, Split::kTest};

struct KeyGroup {
  std::string key;
  std::uint64_t order = 0;
  std::size_t weight = 0;
};

// Greedy fill of one pool of key groups against episode-count targets.
void assign_pool(std::vector<KeyGroup>& groups, const SplitRatios& ratios,
                 std::map<std::string, Split>& assignment) {
  std::size_t total = 0;
  for (const auto& g : groups) total += g.weight;
  const double weights[] = {ratios.train, ratios.val, ratios.test};
  const auto targets = apportion(total, weights);
  std::sort(groups.begin(), groups.end(), [](const KeyGroup& a, const KeyGroup& b) {
    return a.order != b.order ? a.order < b.order : a.key < b.key;
  });
  long long deficit[3];
  for (int i = 0; i < 3; ++i) deficit[i] = static_cast<long long>(targets[static_cast<size_t>(i)]);
  for (const auto& g : groups) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (deficit[i] > deficit[best]) best = i;
    }
    deficit[best] -= static_cast<long long>(g.weight);
    assignment[g.key] = kSplitOrder[best];
  }
}

}  // namespace

std::vector<Episode> build_splits(std::vector<Episode> episodes, const SplitOptions& options) {
  const auto& r = options.ratios;
  if (!(r.train > 0 && r.val > 0 && r.test > 0) ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-6) {
    throw Error(ErrorKind::kConfig, "split ratios must be positive and sum to 1");
  }

  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (!index_of.emplace(episodes[i].id, i).second) {
      throw Error(ErrorKind::kValidation, "duplicate episode id '" + episodes[i].id + "'");
    }
  }

  // Group key of each episode; children resolve through their parent chain.
  std::vector<std::string> key_of(episodes.size());
  std::vector<std::string> pool_of(episodes.size());
  auto root_of = [&](std::size_t i) {
    std::size_t hops = 0;
    while (episodes[i].parent_id) {
      auto it = index_of.find(*episodes[i].parent_id);
      if (it == index_of.end()) {
        throw Error(ErrorKind::kValidation, "episode '" + episodes[i].id +
                                                "' references missing parent '" +
                                                *episodes[i].parent_id + "'");
      }
      i = it->second;
      if (++hops > episodes.size()) {
        throw Error(ErrorKind::kValidation, "parent cycle at '" + episodes[i].id + "'");
      }
    }
    return i;
  };

  std::map<std::string, std::map<std::string, KeyGroup>> pools;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& root = episodes[root_of(i)];
    auto task_key = normalize_task_key(root.task_text);
    if (task_key.empty()) {
      throw Error(ErrorKind::kValidation, "episode '" + root.id + "' has empty task_text");
    }
    pool_of[i] = options.per_source ? root.source_dataset : std::string();
    key_of[i] = options.per_source ? root.source_dataset + '\x1f' + task_key : task_key;
    auto& group = pools[pool_of[i]][key_of[i]];
    if (group.weight == 0) {
      group.key = key_of[i];
      group.order = SampleRng(options.seed ^ fnv1a64(key_of[i])).next();
    }
    ++group.weight;
  }

  std::map<std::string, Split> assignment;
  for (auto& [pool_name, groups_by_key] : pools) {
    if (groups_by_key.size() < 3) {
      throw Error(ErrorKind::kValidation,
                  "insufficient task diversity" +
                      (pool_name.empty() ? std::string() : " in '" + pool_name + "'") + ": " +
                      std::to_string(groups_by_key.size()) + " distinct task keys");
    }
    std::vector<KeyGroup> groups;
    groups.reserve(groups_by_key.size());
    for (auto& [key, g] : groups_by_key) groups.push_back(std::move(g));
    assign_pool(groups, options.ratios, assignment);
  }

  for (std::size_t i = 0; i < episodes.size(); ++i) {
    episodes[i].split = assignment.at(key_of[i]);
  }
  return episodes;
}

SplitCounts split_accounting(std::span<const Episode> episodes) {
  SplitCounts c;
  for (const auto& e : episodes) {
    if (!e.split) throw Error(ErrorKind::kValidation, "episode '" + e.id + "' has no split");
    switch (*e.split) {
      case Split::kTrain: ++c.train; break;
      case Split::kVal: ++c.val; break;
      case Split::kTest: ++c.test; break;
    }
  }
  c.total = c.train + c.val + c.test;
  return c;
}

}  // namespace rewardkit
