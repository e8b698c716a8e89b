#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "rewardkit/clock.hpp"
#include "rewardkit/log.hpp"

namespace rewardkit {

enum class Modality { kText, kVision };
enum class ProviderFamily { kOpenAiChat, kMock };

// How to reach one model. Credentials are never stored here, only the name of
// the environment variable that holds them.
struct ProviderProfile {
  std::string provider_id;
  ProviderFamily family = ProviderFamily::kOpenAiChat;
  std::string endpoint;
  std::string model;
  std::string auth_env_var;
  Modality modality = Modality::kText;
  int max_frames = 1;
  int requests_per_minute = 60;
  int timeout_ms = 120000;

  bool operator==(const ProviderProfile&) const = default;
};

// Throws Error(kConfig) on missing or inconsistent fields.
ProviderProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProviderProfile& profile);

struct DecodingParams {
  double temperature = 0.0;
  int max_output_tokens = 2048;
};

struct ModelCall {
  ProviderProfile profile;
  std::string text;
  std::vector<std::filesystem::path> frames;
  DecodingParams params;
  // Identifies the template the text was rendered from.
  std::string template_id;
  // Re-ask counter; distinct attempts get distinct cache entries.
  int attempt = 0;
};

enum class CallStatus { kOk, kProviderError, kTimeout };
std::string_view to_string(CallStatus status);

struct CallRecord {
  std::string cache_key;
  std::string response_text;
  CallStatus status = CallStatus::kOk;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
  int attempts = 0;
  bool from_cache = false;
  std::string error;
  // Round trip of the last attempt as reported by the transport; excludes
  // pacing and backoff waits. Zero for cache hits.
  std::int64_t latency_ms = 0;

  bool ok() const { return status == CallStatus::kOk; }
};

// Digest over (provider, model, template, prompt, frame contents, params, attempt).
std::string cache_key_for(const ModelCall& call);

struct TransportResponse {
  enum class Kind { kOk, kHttpError, kTimeout, kNetworkError };
  Kind kind = Kind::kOk;
  int http_status = 200;
  std::string text;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
  std::string error;
  std::int64_t latency_ms = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse send(const ModelCall& call, const std::string& credential) = 0;
};

// Chat-completions style HTTP adapter: one user message carrying the text and
// base64 JPEG data URLs for frames.
class ChatCompletionsTransport final : public Transport {
 public:
  TransportResponse send(const ModelCall& call, const std::string& credential) override;
  static nlohmann::json build_request(const ModelCall& call);
};

struct MockReply {
  std::string text;
  int http_status = 200;
  bool timeout = false;
  // Reported as the call's latency; the mock never sleeps.
  std::int64_t latency_ms = 0;

  static MockReply ok(std::string text) { return MockReply{std::move(text)}; }
  static MockReply http_error(int status) { return MockReply{{}, status}; }
  static MockReply timed_out() { return MockReply{{}, 0, true}; }
};

struct MockRule {
  // Matched as a substring of the rendered prompt; first matching rule wins.
  std::string pattern;
  std::vector<MockReply> replies;
};

struct MockScript {
  std::vector<MockRule> rules;

  // {"rules":[{"pattern":"..","responses":["text",{"http_status":429},{"timeout":true}]}]}
  // Object replies may also carry "latency_ms".
  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
};

// Replays a MockScript offline. Throws Error(kConfig) "unscripted prompt" when
// no rule matches and "script exhausted" when the matching rule has no replies
// left.
class MockTransport final : public Transport {
 public:
  explicit MockTransport(MockScript script);
  TransportResponse send(const ModelCall& call, const std::string& credential) override;

 private:
  std::mutex mu_;
  MockScript script_;
  std::vector<std::size_t> cursor_;
};

// Sliding-window limiter: at most `requests_per_minute` issued requests in any
// 60 s window. acquire() reserves a slot and sleeps until it opens.
class RequestPacer {
 public:
  explicit RequestPacer(int requests_per_minute) : limit_(requests_per_minute) {}
  Clock::time_point acquire(Clock& clock);

 private:
  std::mutex mu_;
  int limit_;
  std::deque<Clock::time_point> issued_;
};

struct GatewayOptions {
  // Empty disables the response cache.
  std::filesystem::path cache_root;
  int max_attempts = 5;
  Clock::duration backoff_base{1000};
  int max_in_flight = 8;
  std::uint64_t jitter_seed = 0;
};

struct GatewayStats {
  std::int64_t network_requests = 0;
  std::int64_t cache_hits = 0;
  std::int64_t calls = 0;
};

// Uniform entry point for every model call: cache lookup, credential
// resolution, pacing, bounded concurrency and retry with exponential backoff.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options, Clock& clock = system_clock(),
                   Logger& logger = null_logger());
  ~Gateway();

  // Throws Error(kConfig) for missing credentials or an unregistered mock, and
  // Error(kPrecondition) when a text profile is given frames or a call
  // exceeds max_frames.
  // Provider failures are reported through CallRecord::status.
  CallRecord call(const ModelCall& call);

  // Registers a scripted offline provider and returns its profile.
  ProviderProfile mock_provider(MockScript script, std::string provider_id = "mock",
                                Modality modality = Modality::kVision, int max_frames = 64);

  void set_transport(ProviderFamily family, std::shared_ptr<Transport> transport);

  GatewayStats stats() const;
  const GatewayOptions& options() const { return options_; }

 private:
  std::optional<CallRecord> cache_get(const std::string& provider_id, const std::string& key);
  void cache_put(const std::string& provider_id, const CallRecord& record);
  std::filesystem::path cache_path(const std::string& provider_id, const std::string& key) const;
  std::shared_ptr<Transport> transport_for(const ProviderProfile& profile);
  RequestPacer& pacer_for(const ProviderProfile& profile);

  GatewayOptions options_;
  Clock& clock_;
  Logger& logger_;
  std::counting_semaphore<4096> in_flight_;

  mutable std::mutex mu_;
  std::map<ProviderFamily, std::shared_ptr<Transport>> transports_;
  std::map<std::string, std::shared_ptr<Transport>> mocks_;
  std::map<std::string, std::unique_ptr<RequestPacer>> pacers_;

  std::atomic<std::int64_t> network_requests_{0};
  std::atomic<std::int64_t> cache_hits_{0};
  std::atomic<std::int64_t> calls_{0};
  std::atomic<std::uint64_t> jitter_counter_{0};
};

}  // namespace rewardkit
