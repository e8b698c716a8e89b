#include "rewardkit/config.hpp"

#include <fstream>
#include <set>

#include "rewardkit/digest.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"

namespace rewardkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::kConfig, "config: " + what); }

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
void read_into(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(where + "." + key + " has the wrong type");
  }
}

const json& section(const json& j, const char* key) {
  static const json kEmpty = json::object();
  if (!j.contains(key)) return kEmpty;
  if (!j.at(key).is_object()) fail(std::string(key) + " must be an object");
  return j.at(key);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  std::set<std::string, std::less<>> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items()) {
    if (!ok.contains(k)) fail("unknown key " + where + "." + k);
  }
}

}  // namespace

const ProviderProfile& RunConfig::provider(const std::string& provider_id) const {
  for (const auto& p : providers) {
    if (p.provider_id == provider_id) return p;
  }
  fail("no provider '" + provider_id + "'");
}

StageProfiles RunConfig::stage_profiles() const {
  StageProfiles out;
  for (const auto& [stage, id] : stages) out.by_stage[stage] = provider(id);
  return out;
}

TemplateSet RunConfig::templates() const {
  return paths.templates.empty() ? TemplateSet::builtin(template_version)
                                 : TemplateSet::load(paths.templates, template_version);
}

std::vector<std::string> RunConfig::verbs() const {
  auto out = builtin_verb_lexicon();
  if (!paths.verbs.empty()) {
    for (const auto& line : read_lines(paths.verbs)) {
      if (line.front() != '#') out.push_back(line);
    }
  }
  return out;
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) fail("document must be an object");
  check_keys(j, "config", {"paths", "providers", "stages", "pipeline", "splits", "ingest", "eval", "ablation",
                           "encoder", "gateway"});
  RunConfig c;

  const auto& paths = section(j, "paths");
  check_keys(paths, "paths", {"work_root", "cache_root", "templates", "verbs"});
  std::string work_root = "work", cache_root = "work/cache", templates, verbs;
  read_into(paths, "work_root", work_root, "paths");
  read_into(paths, "cache_root", cache_root, "paths");
  read_into(paths, "templates", templates, "paths");
  read_into(paths, "verbs", verbs, "paths");
  c.paths = {resolve(base_dir, work_root), resolve(base_dir, cache_root), resolve(base_dir, templates),
             resolve(base_dir, verbs)};

  if (j.contains("providers")) {
    if (!j.at("providers").is_array()) fail("providers must be an array");
    std::set<std::string, std::less<>> ids;
    for (const auto& pj : j.at("providers")) {
      auto profile_json = pj;
      std::string script;
      if (pj.is_object() && pj.contains("script")) {
        read_into(pj, "script", script, "providers");
        profile_json.erase("script");
      }
      auto profile = profile_from_json(profile_json);
      if (!ids.insert(profile.provider_id).second) fail("duplicate provider '" + profile.provider_id + "'");
      if (profile.family == ProviderFamily::kMock) {
        if (script.empty()) fail("mock provider '" + profile.provider_id + "' needs a script");
        c.mock_scripts[profile.provider_id] = resolve(base_dir, script);
      }
      c.providers.push_back(std::move(profile));
    }
  }

  const auto& stages = section(j, "stages");
  for (const auto& [name, id] : stages.items()) {
    Stage stage;
    try {
      stage = parse_stage(name);
    } catch (const Error&) {
      fail("unknown stage '" + name + "'");
    }
    if (!id.is_string()) fail("stages." + name + " must name a provider");
    c.stages[stage] = id.get<std::string>();
    (void)c.provider(c.stages[stage]);
  }

  const auto& pipe = section(j, "pipeline");
  check_keys(pipe, "pipeline", {"fractions", "proposed_scores", "max_ladder_attempts", "command_reask_cap",
                                "plan_reask_cap", "validation_reask_cap", "partial_acceptance", "frame_rate_hz",
                                "max_words", "template_version", "temperature", "max_output_tokens"});
  auto& p = c.pipeline;
  read_into(pipe, "fractions", p.clip_spec.fractions, "pipeline");
  read_into(pipe, "proposed_scores", p.clip_spec.proposed_scores, "pipeline");
  read_into(pipe, "max_ladder_attempts", p.max_ladder_attempts, "pipeline");
  read_into(pipe, "command_reask_cap", p.command_reask_cap, "pipeline");
  read_into(pipe, "plan_reask_cap", p.plan_reask_cap, "pipeline");
  read_into(pipe, "validation_reask_cap", p.validation_reask_cap, "pipeline");
  read_into(pipe, "partial_acceptance", p.partial_acceptance, "pipeline");
  read_into(pipe, "frame_rate_hz", p.frame_rate_hz, "pipeline");
  read_into(pipe, "max_words", p.max_words, "pipeline");
  read_into(pipe, "template_version", c.template_version, "pipeline");
  read_into(pipe, "temperature", p.params.temperature, "pipeline");
  read_into(pipe, "max_output_tokens", p.params.max_output_tokens, "pipeline");
  p.clip_spec.check();
  if (p.max_ladder_attempts < 1) fail("pipeline.max_ladder_attempts must be >= 1");
  if (p.command_reask_cap < 0 || p.plan_reask_cap < 0 || p.validation_reask_cap < 0) {
    fail("pipeline re-ask caps must be >= 0");
  }
  if (!(p.frame_rate_hz > 0.0)) fail("pipeline.frame_rate_hz must be positive");
  if (p.max_words < 1) fail("pipeline.max_words must be positive");

  const auto& splits = section(j, "splits");
  check_keys(splits, "splits", {"ratios", "seed", "per_source"});
  if (splits.contains("ratios")) {
    std::vector<double> r;
    read_into(splits, "ratios", r, "splits");
    if (r.size() != 3) fail("splits.ratios needs three values (train, val, test)");
    c.splits.ratios = {r[0], r[1], r[2]};
  }
  read_into(splits, "seed", c.splits.seed, "splits");
  read_into(splits, "per_source", c.splits.per_source, "splits");

  const auto& ingest = section(j, "ingest");
  check_keys(ingest, "ingest", {"cap", "seed"});
  read_into(ingest, "cap", c.ingest.cap, "ingest");
  read_into(ingest, "seed", c.ingest.seed, "ingest");
  if (c.ingest.cap < 1) fail("ingest.cap must be positive");

  const auto& eval = section(j, "eval");
  check_keys(eval, "eval", {"models", "concurrency", "require_verified"});
  read_into(eval, "models", c.eval.models, "eval");
  read_into(eval, "concurrency", c.eval.concurrency, "eval");
  read_into(eval, "require_verified", c.eval.require_verified, "eval");
  if (c.eval.concurrency < 1) fail("eval.concurrency must be positive");
  for (const auto& m : c.eval.models) (void)c.provider(m);

  const auto& ablation = section(j, "ablation");
  check_keys(ablation, "ablation", {"disable_counterfactual", "disable_clipping"});
  read_into(ablation, "disable_counterfactual", c.ablation.disable_counterfactual, "ablation");
  read_into(ablation, "disable_clipping", c.ablation.disable_clipping, "ablation");

  const auto& encoder = section(j, "encoder");
  check_keys(encoder, "encoder", {"program", "clip_codec_args", "clip_container", "jpeg_qscale"});
  read_into(encoder, "program", c.encoder.program, "encoder");
  read_into(encoder, "clip_codec_args", c.encoder.clip_codec_args, "encoder");
  read_into(encoder, "clip_container", c.encoder.clip_container, "encoder");
  read_into(encoder, "jpeg_qscale", c.encoder.jpeg_qscale, "encoder");

  const auto& gateway = section(j, "gateway");
  check_keys(gateway, "gateway", {"max_attempts", "backoff_base_ms", "max_in_flight", "jitter_seed"});
  std::int64_t backoff_ms = c.gateway.backoff_base.count();
  read_into(gateway, "max_attempts", c.gateway.max_attempts, "gateway");
  read_into(gateway, "backoff_base_ms", backoff_ms, "gateway");
  read_into(gateway, "max_in_flight", c.gateway.max_in_flight, "gateway");
  read_into(gateway, "jitter_seed", c.gateway.jitter_seed, "gateway");
  c.gateway.backoff_base = Clock::duration(backoff_ms);
  c.gateway.cache_root = c.paths.cache_root;
  if (c.gateway.max_attempts < 1 || c.gateway.max_in_flight < 1 || backoff_ms < 0) {
    fail("gateway limits must be positive");
  }

  c.pipeline.config_digest = config_digest(c);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kConfig, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    fail(path.string() + ": " + ex.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  json providers = json::array();
  for (const auto& p : c.providers) {
    auto pj = to_json(p);
    if (auto it = c.mock_scripts.find(p.provider_id); it != c.mock_scripts.end()) pj["script"] = it->second.string();
    providers.push_back(pj);
  }
  json stages = json::object();
  for (const auto& [s, id] : c.stages) stages[std::string(to_string(s))] = id;
  const auto& p = c.pipeline;
  return {
      {"paths",
       {{"work_root", c.paths.work_root.string()},
        {"cache_root", c.paths.cache_root.string()},
        {"templates", c.paths.templates.string()},
        {"verbs", c.paths.verbs.string()}}},
      {"providers", providers},
      {"stages", stages},
      {"pipeline",
       {{"fractions", p.clip_spec.fractions},
        {"proposed_scores", p.clip_spec.proposed_scores},
        {"max_ladder_attempts", p.max_ladder_attempts},
        {"command_reask_cap", p.command_reask_cap},
        {"plan_reask_cap", p.plan_reask_cap},
        {"validation_reask_cap", p.validation_reask_cap},
        {"partial_acceptance", p.partial_acceptance},
        {"frame_rate_hz", p.frame_rate_hz},
        {"max_words", p.max_words},
        {"template_version", c.template_version},
        {"temperature", p.params.temperature},
        {"max_output_tokens", p.params.max_output_tokens}}},
      {"splits",
       {{"ratios", {c.splits.ratios.train, c.splits.ratios.val, c.splits.ratios.test}},
        {"seed", c.splits.seed},
        {"per_source", c.splits.per_source}}},
      {"ingest", {{"cap", c.ingest.cap}, {"seed", c.ingest.seed}}},
      {"eval",
       {{"models", c.eval.models}, {"concurrency", c.eval.concurrency}, {"require_verified", c.eval.require_verified}}},
      {"ablation",
       {{"disable_counterfactual", c.ablation.disable_counterfactual},
        {"disable_clipping", c.ablation.disable_clipping}}},
      {"encoder",
       {{"program", c.encoder.program},
        {"clip_codec_args", c.encoder.clip_codec_args},
        {"clip_container", c.encoder.clip_container},
        {"jpeg_qscale", c.encoder.jpeg_qscale}}},
      {"gateway",
       {{"max_attempts", c.gateway.max_attempts},
        {"backoff_base_ms", c.gateway.backoff_base.count()},
        {"max_in_flight", c.gateway.max_in_flight},
        {"jitter_seed", c.gateway.jitter_seed}}},
  };
}

std::string config_digest(const RunConfig& config) {
  auto doc = to_json(config);
  // Locations do not change results; contents do.
  doc.erase("paths");
  for (auto& p : doc["providers"]) {
    if (p.contains("script")) {
      const fs::path script = p["script"].get<std::string>();
      std::error_code ec;
      p["script"] = fs::exists(script, ec) ? sha256_file(script) : std::string("missing");
    }
  }
  json templates = json::object();
  const auto set = config.templates();
  for (auto s : {Stage::kRewrite, Stage::kAnalysis, Stage::kPlanning, Stage::kCommandGeneration, Stage::kValidation,
                 Stage::kEvaluation}) {
    templates[std::string(to_string(s))] = set.get(s).digest();
  }
  doc["templates"] = templates;
  doc["verbs"] = sha256_hex(json(config.verbs()).dump());
  doc["rubric"] = sha256_hex(Rubric::standard().text());
  return sha256_hex(doc.dump());
}

}  // namespace rewardkit
