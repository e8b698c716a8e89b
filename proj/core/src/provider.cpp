#include "rewardkit/provider.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "rewardkit/digest.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"
#include "rewardkit/sampling.hpp"

namespace rewardkit {

using nlohmann::json;

namespace {

std::string_view family_name(ProviderFamily family) {
  return family == ProviderFamily::kMock ? "mock" : "chat_completions";
}

std::string read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read frame " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_transient(const TransportResponse& r) {
  switch (r.kind) {
    case TransportResponse::Kind::kOk: return false;
    case TransportResponse::Kind::kTimeout:
    case TransportResponse::Kind::kNetworkError: return true;
    case TransportResponse::Kind::kHttpError:
      return r.http_status == 408 || r.http_status == 429 || r.http_status >= 500;
  }
  return false;
}

}  // namespace

std::string_view to_string(CallStatus status) {
  switch (status) {
    case CallStatus::kOk: return "ok";
    case CallStatus::kProviderError: return "provider_error";
    case CallStatus::kTimeout: return "timeout";
  }
  return "?";
}

ProviderProfile profile_from_json(const json& j) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfig, "provider profile: " + what); };
  if (!j.is_object()) fail("not an object");
  ProviderProfile p;
  try {
    p.provider_id = j.at("provider_id").get<std::string>();
    const auto family = j.value("family", std::string("chat_completions"));
    if (family == "mock") {
      p.family = ProviderFamily::kMock;
    } else if (family == "chat_completions") {
      p.family = ProviderFamily::kOpenAiChat;
    } else {
      fail("unknown family '" + family + "'");
    }
    p.endpoint = j.value("endpoint", std::string());
    p.model = j.value("model", std::string());
    p.auth_env_var = j.value("auth_env_var", std::string());
    const auto modality = j.value("modality", std::string("text"));
    if (modality == "text") {
      p.modality = Modality::kText;
    } else if (modality == "vision") {
      p.modality = Modality::kVision;
    } else {
      fail("unknown modality '" + modality + "'");
    }
    p.max_frames = j.value("max_frames", p.modality == Modality::kVision ? 64 : 1);
    p.requests_per_minute = j.value("requests_per_minute", p.family == ProviderFamily::kMock ? 1000000 : 60);
    p.timeout_ms = j.value("timeout_ms", 120000);
  } catch (const json::exception& ex) {
    fail(ex.what());
  }
  if (p.provider_id.empty()) fail("empty provider_id");
  if (j.contains("api_key") || j.contains("credential")) {
    fail("'" + p.provider_id + "' embeds a credential; use auth_env_var instead");
  }
  if (p.family == ProviderFamily::kOpenAiChat && p.endpoint.empty()) {
    fail("'" + p.provider_id + "' has no endpoint");
  }
  if (p.modality == Modality::kVision && p.max_frames < 1) fail("vision profile needs max_frames >= 1");
  if (p.requests_per_minute < 1) fail("requests_per_minute must be positive");
  if (p.timeout_ms < 1) fail("timeout_ms must be positive");
  return p;
}

json to_json(const ProviderProfile& p) {
  return {{"provider_id", p.provider_id},
          {"family", family_name(p.family)},
          {"endpoint", p.endpoint},
          {"model", p.model},
          {"auth_env_var", p.auth_env_var},
          {"modality", p.modality == Modality::kVision ? "vision" : "text"},
          {"max_frames", p.max_frames},
          {"requests_per_minute", p.requests_per_minute},
          {"timeout_ms", p.timeout_ms}};
}

std::string cache_key_for(const ModelCall& call) {
  json frames = json::array();
  for (const auto& f : call.frames) frames.push_back(sha256_file(f));
  const json key = {
      {"provider", call.profile.provider_id},
      {"model", call.profile.model},
      {"template", call.template_id},
      {"prompt", call.text},
      {"frames", frames},
      {"temperature", call.params.temperature},
      {"max_output_tokens", call.params.max_output_tokens},
      {"attempt", call.attempt},
  };
  return sha256_hex(key.dump());
}

json ChatCompletionsTransport::build_request(const ModelCall& call) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", call.text}});
  for (const auto& frame : call.frames) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/jpeg;base64," + base64_encode(read_binary(frame))}}}});
  }
  json body = {{"model", call.profile.model},
               {"messages", json::array({{{"role", "user"}, {"content", content}}})},
               {"temperature", call.params.temperature},
               {"max_tokens", call.params.max_output_tokens}};
  return body;
}

TransportResponse ChatCompletionsTransport::send(const ModelCall& call, const std::string& credential) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(call.profile.endpoint, m, kUrl)) {
    throw Error(ErrorKind::kConfig, "provider '" + call.profile.provider_id + "' has malformed endpoint");
  }
  const std::string origin = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client client(origin);
  const auto timeout = std::chrono::milliseconds(call.profile.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!credential.empty()) headers.emplace("Authorization", "Bearer " + credential);

  TransportResponse out;
  const auto sent = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, build_request(call).dump(), "application/json");
  out.latency_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - sent).count();
  if (!res) {
    const auto err = res.error();
    out.kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                   ? TransportResponse::Kind::kTimeout
                   : TransportResponse::Kind::kNetworkError;
    out.http_status = 0;
    out.error = httplib::to_string(err);
    return out;
  }
  out.http_status = res->status;
  if (res->status != 200) {
    out.kind = TransportResponse::Kind::kHttpError;
    out.error = "HTTP " + std::to_string(res->status);
    return out;
  }
  try {
    const auto body = json::parse(res->body);
    const auto& message = body.at("choices").at(0).at("message");
    const auto& content = message.at("content");
    if (content.is_string()) {
      out.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") out.text += part.value("text", "");
      }
    }
    if (auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
      if (usage->contains("prompt_tokens")) out.prompt_tokens = usage->at("prompt_tokens").get<std::int64_t>();
      if (usage->contains("completion_tokens")) {
        out.completion_tokens = usage->at("completion_tokens").get<std::int64_t>();
      }
    }
  } catch (const json::exception& ex) {
    out.kind = TransportResponse::Kind::kHttpError;
    out.error = std::string("unparseable response body: ") + ex.what();
  }
  return out;
}

MockScript MockScript::from_json(const json& j) {
  MockScript script;
  try {
    for (const auto& rule : j.at("rules")) {
      MockRule r;
      r.pattern = rule.at("pattern").get<std::string>();
      for (const auto& reply : rule.at("responses")) {
        if (reply.is_string()) {
          r.replies.push_back(MockReply::ok(reply.get<std::string>()));
        } else {
          MockReply mr = reply.value("timeout", false) ? MockReply::timed_out() : MockReply{};
          if (!mr.timeout) {
            mr.text = reply.value("text", std::string());
            mr.http_status = reply.value("http_status", 200);
          }
          mr.latency_ms = reply.value("latency_ms", std::int64_t{0});
          if (mr.latency_ms < 0) throw Error(ErrorKind::kConfig, "malformed mock script: negative latency_ms");
          r.replies.push_back(mr);
        }
      }
      script.rules.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kConfig, std::string("malformed mock script: ") + ex.what());
  }
  if (script.rules.empty()) throw Error(ErrorKind::kConfig, "mock script has no rules");
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open mock script " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + ex.what());
  }
}

MockTransport::MockTransport(MockScript script)
    : script_(std::move(script)), cursor_(script_.rules.size(), 0) {
  if (script_.rules.empty()) throw Error(ErrorKind::kConfig, "mock script has no rules");
}

TransportResponse MockTransport::send(const ModelCall& call, const std::string&) {
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const auto& rule = script_.rules[i];
    if (call.text.find(rule.pattern) == std::string::npos) continue;
    if (cursor_[i] >= rule.replies.size()) {
      throw Error(ErrorKind::kConfig, "script exhausted for pattern '" + rule.pattern + "'");
    }
    const auto& reply = rule.replies[cursor_[i]++];
    TransportResponse out;
    out.latency_ms = reply.latency_ms;
    if (reply.timeout) {
      out.kind = TransportResponse::Kind::kTimeout;
      out.http_status = 0;
      out.error = "scripted timeout";
    } else if (reply.http_status != 200) {
      out.kind = TransportResponse::Kind::kHttpError;
      out.http_status = reply.http_status;
      out.error = "HTTP " + std::to_string(reply.http_status);
    } else {
      out.text = reply.text;
    }
    return out;
  }
  const auto head = call.text.substr(0, 80);
  throw Error(ErrorKind::kConfig, "unscripted prompt: '" + head + "'");
}

Clock::time_point RequestPacer::acquire(Clock& clock) {
  using namespace std::chrono_literals;
  Clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    slot = clock.now();
    if (static_cast<int>(issued_.size()) >= limit_) {
      // With limit_ slots on record, the oldest must be 60 s in the past.
      const auto earliest = issued_.front() + 60000ms;
      if (earliest > slot) slot = earliest;
    }
    if (!issued_.empty() && issued_.back() > slot) slot = issued_.back();
    issued_.push_back(slot);
    while (static_cast<int>(issued_.size()) > limit_) issued_.pop_front();
  }
  clock.sleep_until(slot);
  return slot;
}

Gateway::Gateway(GatewayOptions options, Clock& clock, Logger& logger)
    : options_(std::move(options)),
      clock_(clock),
      logger_(logger),
      in_flight_(std::max(1, options_.max_in_flight)) {
  if (options_.max_attempts < 1) throw Error(ErrorKind::kConfig, "max_attempts must be >= 1");
  transports_[ProviderFamily::kOpenAiChat] = std::make_shared<ChatCompletionsTransport>();
}

Gateway::~Gateway() = default;

ProviderProfile Gateway::mock_provider(MockScript script, std::string provider_id, Modality modality,
                                       int max_frames) {
  auto transport = std::make_shared<MockTransport>(std::move(script));
  ProviderProfile profile;
  profile.provider_id = std::move(provider_id);
  profile.family = ProviderFamily::kMock;
  profile.endpoint = "mock://" + profile.provider_id;
  profile.model = "mock";
  profile.modality = modality;
  profile.max_frames = max_frames;
  profile.requests_per_minute = 1000000;
  std::lock_guard lock(mu_);
  mocks_[profile.provider_id] = std::move(transport);
  return profile;
}

void Gateway::set_transport(ProviderFamily family, std::shared_ptr<Transport> transport) {
  std::lock_guard lock(mu_);
  transports_[family] = std::move(transport);
}

GatewayStats Gateway::stats() const {
  return GatewayStats{network_requests_.load(), cache_hits_.load(), calls_.load()};
}

std::shared_ptr<Transport> Gateway::transport_for(const ProviderProfile& profile) {
  std::lock_guard lock(mu_);
  if (profile.family == ProviderFamily::kMock) {
    auto it = mocks_.find(profile.provider_id);
    if (it == mocks_.end()) {
      throw Error(ErrorKind::kConfig, "no mock script registered for '" + profile.provider_id + "'");
    }
    return it->second;
  }
  return transports_.at(profile.family);
}

RequestPacer& Gateway::pacer_for(const ProviderProfile& profile) {
  std::lock_guard lock(mu_);
  auto& slot = pacers_[profile.provider_id];
  if (!slot) slot = std::make_unique<RequestPacer>(profile.requests_per_minute);
  return *slot;
}

std::filesystem::path Gateway::cache_path(const std::string& provider_id, const std::string& key) const {
  return options_.cache_root / provider_id / key.substr(0, 2) / key;
}

std::optional<CallRecord> Gateway::cache_get(const std::string& provider_id, const std::string& key) {
  if (options_.cache_root.empty()) return std::nullopt;
  std::ifstream in(cache_path(provider_id, key));
  if (!in) return std::nullopt;
  try {
    const auto j = json::parse(in);
    CallRecord r;
    r.cache_key = key;
    r.response_text = j.at("response_text").get<std::string>();
    r.status = CallStatus::kOk;
    if (j.contains("prompt_tokens")) r.prompt_tokens = j["prompt_tokens"].get<std::int64_t>();
    if (j.contains("completion_tokens")) r.completion_tokens = j["completion_tokens"].get<std::int64_t>();
    r.from_cache = true;
    return r;
  } catch (const json::exception&) {
    logger_.warn("cache_entry_corrupt", {{"provider_id", provider_id}, {"cache_key", key}});
    return std::nullopt;
  }
}

void Gateway::cache_put(const std::string& provider_id, const CallRecord& record) {
  if (options_.cache_root.empty()) return;
  json j = {{"cache_key", record.cache_key}, {"response_text", record.response_text}};
  if (record.prompt_tokens) j["prompt_tokens"] = *record.prompt_tokens;
  if (record.completion_tokens) j["completion_tokens"] = *record.completion_tokens;
  write_file_atomic(cache_path(provider_id, record.cache_key), j.dump());
}

CallRecord Gateway::call(const ModelCall& call) {
  ++calls_;
  const auto& profile = call.profile;
  if (profile.modality == Modality::kText && !call.frames.empty()) {
    throw Error(ErrorKind::kPrecondition, "text profile '" + profile.provider_id + "' given frames");
  }
  if (static_cast<int>(call.frames.size()) > profile.max_frames) {
    throw Error(ErrorKind::kPrecondition, std::to_string(call.frames.size()) + " frames exceed max_frames " +
                                              std::to_string(profile.max_frames) + " of '" +
                                              profile.provider_id + "'");
  }

  const auto key = cache_key_for(call);
  if (auto cached = cache_get(profile.provider_id, key)) {
    ++cache_hits_;
    logger_.debug("provider_cache_hit", {{"provider_id", profile.provider_id}, {"cache_key", key}});
    return *cached;
  }

  std::string credential;
  if (!profile.auth_env_var.empty()) {
    const char* value = std::getenv(profile.auth_env_var.c_str());
    if (value == nullptr || *value == '\0') {
      throw Error(ErrorKind::kConfig, "environment variable " + profile.auth_env_var +
                                          " is not set (provider '" + profile.provider_id + "')");
    }
    credential = value;
  }

  auto transport = transport_for(profile);
  auto& pacer = pacer_for(profile);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<4096>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};

  CallRecord record;
  record.cache_key = key;
  auto jitter_rng = SampleRng(options_.jitter_seed ^ fnv1a64(key));
  TransportResponse last;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    pacer.acquire(clock_);
    ++network_requests_;
    record.attempts = attempt;
    last = transport->send(call, credential);
    record.latency_ms = last.latency_ms;
    if (last.kind == TransportResponse::Kind::kOk) break;
    logger_.warn("provider_attempt_failed", {{"provider_id", profile.provider_id},
                                              {"cache_key", key},
                                              {"attempt", attempt},
                                              {"http_status", last.http_status},
                                              {"error", last.error}});
    if (!is_transient(last) || attempt == options_.max_attempts) break;
    const auto base = options_.backoff_base.count();
    const auto backoff = base * (std::int64_t{1} << (attempt - 1));
    const auto jitter = base > 0 ? static_cast<std::int64_t>(jitter_rng.below(static_cast<std::uint64_t>(base) / 2 + 1)) : 0;
    clock_.sleep_for(Clock::duration(backoff + jitter));
  }

  if (last.kind == TransportResponse::Kind::kOk) {
    record.status = CallStatus::kOk;
    record.response_text = std::move(last.text);
    record.prompt_tokens = last.prompt_tokens;
    record.completion_tokens = last.completion_tokens;
    cache_put(profile.provider_id, record);
  } else {
    record.status = last.kind == TransportResponse::Kind::kTimeout ? CallStatus::kTimeout
                                                                  : CallStatus::kProviderError;
    record.error = last.error;
  }
  logger_.info("provider_call", {{"provider_id", profile.provider_id},
                                 {"cache_key", key},
                                 {"status", to_string(record.status)},
                                 {"attempts", record.attempts}});
  return record;
}

}  // namespace rewardkit
