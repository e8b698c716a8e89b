#include <gtest/gtest.h>

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "rewardkit/error.hpp"
#include "rewardkit/provider.hpp"
#include "test_support.hpp"

using namespace rewardkit;
using namespace rewardkit::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ModelCall text_call(const ProviderProfile& p, std::string text, int attempt = 0) {
  ModelCall c;
  c.profile = p;
  c.text = std::move(text);
  c.template_id = "test@v1";
  c.attempt = attempt;
  return c;
}

MockScript script_of(const json& j) { return MockScript::from_json(j); }

// Records when each request was issued on the gateway clock.
class StampTransport final : public Transport {
 public:
  explicit StampTransport(Clock& clock) : clock_(clock) {}
  TransportResponse send(const ModelCall& call, const std::string&) override {
    std::lock_guard lock(mu_);
    stamps.push_back(clock_.now_ms());
    TransportResponse r;
    r.text = "echo " + call.text;
    return r;
  }
  std::mutex mu_;
  std::vector<std::int64_t> stamps;

 private:
  Clock& clock_;
};

std::string slurp_tree(const fs::path& root) {
  std::string all;
  if (!fs::exists(root)) return all;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) all += read_text(entry.path()) + entry.path().string();
  }
  return all;
}

}  // namespace

TEST(MockProvider, ScriptedPassthrough) {
  Gateway gw({});
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "score 2"}, {"responses", {"Push the bowl"}}}}}}));
  auto r = gw.call(text_call(p, "now give score 2 please"));
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.response_text, "Push the bowl");
}

TEST(MockProvider, AnswerVerbatim) {
  Gateway gw({});
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "validator"}, {"responses", {"ANSWER: TRUE"}}}}}}));
  EXPECT_EQ(gw.call(text_call(p, "strict validator")).response_text, "ANSWER: TRUE");
}

TEST(MockProvider, UnscriptedPromptIsExplicit) {
  Gateway gw({});
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "alpha"}, {"responses", {"a"}}}}}}));
  try {
    gw.call(text_call(p, "beta"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unscripted prompt"), std::string::npos);
  }
}

TEST(MockProvider, ExhaustionIsExplicit) {
  Gateway gw({});
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "x"}, {"responses", {"one"}}}}}}));
  EXPECT_EQ(gw.call(text_call(p, "x", 0)).response_text, "one");
  try {
    gw.call(text_call(p, "x", 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("script exhausted"), std::string::npos);
  }
}

TEST(MockProvider, FirstMatchingRuleWinsAndSequencesAdvance) {
  Gateway gw({});
  auto p = gw.mock_provider(script_of(
      {{"rules", {{{"pattern", "score 3"}, {"responses", {"first", "second"}}}, {{"pattern", "score"}, {"responses", {"other"}}}}}}));
  EXPECT_EQ(gw.call(text_call(p, "score 3", 0)).response_text, "first");
  EXPECT_EQ(gw.call(text_call(p, "score 3", 1)).response_text, "second");
  EXPECT_EQ(gw.call(text_call(p, "score 4")).response_text, "other");
}

TEST(MockScript, RejectsEmptyAndMalformed) {
  EXPECT_THROW(MockScript::from_json({{"rules", json::array()}}), Error);
  EXPECT_THROW(MockScript::from_json({{"nope", 1}}), Error);
}

TEST(Gateway, RepeatedCallServedFromCache) {
  TempDir dir;
  GatewayOptions opt;
  opt.cache_root = dir / "cache";
  Gateway gw(opt);
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "q"}, {"responses", {"answer"}}}}}}), "m1");
  auto first = gw.call(text_call(p, "q"));
  auto second = gw.call(text_call(p, "q"));
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.response_text, "answer");
  EXPECT_EQ(first.cache_key, second.cache_key);
  auto s = gw.stats();
  EXPECT_EQ(s.network_requests, 1);
  EXPECT_EQ(s.cache_hits, 1);
  // <cache_root>/<provider_id>/<prefix>/<key>
  EXPECT_TRUE(fs::exists(opt.cache_root / "m1" / first.cache_key.substr(0, 2) / first.cache_key));

  // A fresh gateway on the same directory needs no script at all.
  Gateway again(opt);
  auto p2 = again.mock_provider(script_of({{"rules", {{{"pattern", "never"}, {"responses", {"x"}}}}}}), "m1");
  EXPECT_EQ(again.call(text_call(p2, "q")).response_text, "answer");
  EXPECT_EQ(again.stats().network_requests, 0);
}

TEST(Gateway, CacheKeyDependsOnEveryInput) {
  TempDir dir;
  write_text(dir / "f1.img", "a");
  write_text(dir / "f2.img", "b");
  ProviderProfile p;
  p.provider_id = "p";
  p.modality = Modality::kVision;
  p.max_frames = 4;
  auto base = text_call(p, "prompt");
  base.frames = {dir / "f1.img"};
  const auto k = cache_key_for(base);
  EXPECT_EQ(k, cache_key_for(base));
  auto v = base;
  v.text = "prompt!";
  EXPECT_NE(k, cache_key_for(v));
  v = base;
  v.attempt = 1;
  EXPECT_NE(k, cache_key_for(v));
  v = base;
  v.template_id = "test@v2";
  EXPECT_NE(k, cache_key_for(v));
  v = base;
  v.params.temperature = 0.5;
  EXPECT_NE(k, cache_key_for(v));
  v = base;
  v.profile.provider_id = "q";
  EXPECT_NE(k, cache_key_for(v));
  v = base;
  v.frames = {dir / "f2.img"};
  EXPECT_NE(k, cache_key_for(v));
  // Frame identity is by content, not by path.
  write_text(dir / "copy.img", "a");
  v = base;
  v.frames = {dir / "copy.img"};
  EXPECT_EQ(k, cache_key_for(v));
}

TEST(Gateway, RetriesTransientThenSucceeds) {
  SimulatedClock clock;
  GatewayOptions opt;
  Gateway gw(opt, clock);
  auto p = gw.mock_provider(script_of({{"rules",
                                        {{{"pattern", "q"},
                                          {"responses", {{{"http_status", 429}}, {{"http_status", 429}}, "fine"}}}}}}));
  auto r = gw.call(text_call(p, "q"));
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(r.response_text, "fine");
  // Backoff 1 s then 2 s, each plus up to half a base of jitter.
  EXPECT_GE(clock.now_ms(), 3000);
  EXPECT_LE(clock.now_ms(), 4000);
}

TEST(Gateway, ExhaustedRetriesReportProviderError) {
  SimulatedClock clock;
  GatewayOptions opt;
  opt.max_attempts = 3;
  Gateway gw(opt, clock);
  auto p = gw.mock_provider(script_of(
      {{"rules", {{{"pattern", "q"}, {"responses", {{{"http_status", 503}}, {{"timeout", true}}, {{"timeout", true}}}}}}}}));
  auto r = gw.call(text_call(p, "q"));
  EXPECT_EQ(r.status, CallStatus::kTimeout);
  EXPECT_EQ(r.attempts, 3);
  EXPECT_FALSE(r.ok());
}

TEST(Gateway, PermanentErrorIsNotRetried) {
  SimulatedClock clock;
  Gateway gw({}, clock);
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "q"}, {"responses", {{{"http_status", 400}}}}}}}}));
  auto r = gw.call(text_call(p, "q"));
  EXPECT_EQ(r.status, CallStatus::kProviderError);
  EXPECT_EQ(r.attempts, 1);
  EXPECT_EQ(clock.now_ms(), 0);
}

TEST(Gateway, FailuresAreNotCached) {
  TempDir dir;
  SimulatedClock clock;
  GatewayOptions opt;
  opt.cache_root = dir / "cache";
  opt.max_attempts = 1;
  Gateway gw(opt, clock);
  auto p = gw.mock_provider(script_of({{"rules", {{{"pattern", "q"}, {"responses", {{{"http_status", 500}}, "ok now"}}}}}}));
  EXPECT_FALSE(gw.call(text_call(p, "q")).ok());
  EXPECT_EQ(gw.call(text_call(p, "q")).response_text, "ok now");
}

TEST(Gateway, FrameGuards) {
  TempDir dir;
  write_text(dir / "f.img", "x");
  Gateway gw({});
  auto text = gw.mock_provider(script_of({{"rules", {{{"pattern", "q"}, {"responses", {"a", "b"}}}}}}), "t", Modality::kText, 1);
  auto call = text_call(text, "q");
  call.frames = {dir / "f.img"};
  try {
    gw.call(call);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  }
  auto vision = gw.mock_provider(script_of({{"rules", {{{"pattern", "q"}, {"responses", {"a"}}}}}}), "v", Modality::kVision, 1);
  call = text_call(vision, "q");
  call.frames = {dir / "f.img", dir / "f.img"};
  EXPECT_THROW(gw.call(call), Error);
  // A vision profile may still take a text-only call.
  EXPECT_EQ(gw.call(text_call(vision, "q")).response_text, "a");
}

TEST(Gateway, UnregisteredMockIsConfigError) {
  Gateway gw({});
  ProviderProfile p;
  p.provider_id = "ghost";
  p.family = ProviderFamily::kMock;
  try {
    gw.call(text_call(p, "q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Pacing, SlidingWindowNeverExceedsLimit) {
  SimulatedClock clock;
  GatewayOptions opt;
  Gateway gw(opt, clock);
  auto stamps = std::make_shared<StampTransport>(clock);
  gw.set_transport(ProviderFamily::kOpenAiChat, stamps);
  ProviderProfile p;
  p.provider_id = "paced";
  p.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  p.requests_per_minute = 5;
  for (int i = 0; i < 23; ++i) {
    if (i % 4 == 0) clock.advance(std::chrono::milliseconds(7000));
    gw.call(text_call(p, "q" + std::to_string(i)));
  }
  ASSERT_EQ(stamps->stamps.size(), 23u);
  for (std::size_t i = 0; i < stamps->stamps.size(); ++i) {
    int in_window = 0;
    for (auto t : stamps->stamps) {
      if (t >= stamps->stamps[i] && t < stamps->stamps[i] + 60000) ++in_window;
    }
    EXPECT_LE(in_window, 5) << "window starting at " << stamps->stamps[i];
  }
  // The limiter waits only as long as needed: the sixth request goes out
  // exactly one minute after the first.
  EXPECT_EQ(stamps->stamps[5] - stamps->stamps[0], 60000);
}

TEST(Pacing, ConcurrentCallersShareTheLimiter) {
  SimulatedClock clock;
  GatewayOptions opt;
  opt.max_in_flight = 4;
  Gateway gw(opt, clock);
  auto stamps = std::make_shared<StampTransport>(clock);
  gw.set_transport(ProviderFamily::kOpenAiChat, stamps);
  ProviderProfile p;
  p.provider_id = "paced";
  p.endpoint = "http://127.0.0.1:1/x";
  p.requests_per_minute = 3;
  std::vector<std::thread> threads;
  std::vector<std::string> answers(12);
  for (int i = 0; i < 12; ++i) {
    threads.emplace_back([&, i] { answers[static_cast<size_t>(i)] = gw.call(text_call(p, "c" + std::to_string(i))).response_text; });
  }
  for (auto& t : threads) t.join();
  for (int i = 0; i < 12; ++i) EXPECT_EQ(answers[static_cast<size_t>(i)], "echo c" + std::to_string(i));
  EXPECT_EQ(stamps->stamps.size(), 12u);
  // Twelve requests at three per minute: the last slot opens at minute three.
  EXPECT_GE(clock.now_ms(), 180000);
}

TEST(ProfileJson, ParsesAndRejects) {
  auto p = profile_from_json({{"provider_id", "gpt"},
                              {"endpoint", "https://api.example.com/v1/chat/completions"},
                              {"model", "m"},
                              {"auth_env_var", "EXAMPLE_KEY"},
                              {"modality", "vision"},
                              {"max_frames", 32}});
  EXPECT_EQ(p.modality, Modality::kVision);
  EXPECT_EQ(p.max_frames, 32);
  EXPECT_EQ(p.requests_per_minute, 60);
  EXPECT_EQ(profile_from_json(to_json(p)), p);

  EXPECT_THROW(profile_from_json({{"provider_id", "x"}}), Error);  // no endpoint
  EXPECT_THROW(profile_from_json({{"provider_id", "x"}, {"endpoint", "http://h"}, {"api_key", "k"}}), Error);
  EXPECT_THROW(profile_from_json({{"provider_id", "x"}, {"endpoint", "http://h"}, {"modality", "audio"}}), Error);
  EXPECT_THROW(profile_from_json({{"provider_id", "x"}, {"endpoint", "http://h"}, {"requests_per_minute", 0}}), Error);
  auto mock = profile_from_json({{"provider_id", "m"}, {"family", "mock"}});
  EXPECT_EQ(mock.family, ProviderFamily::kMock);
}

// Real HTTP adapter against a local server that rate-limits twice.
class ChatServer : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      ++hits_;
      auth_.push_back(req.get_header_value("Authorization"));
      bodies_.push_back(req.body);
      if (hits_ <= fail_first_) {
        res.status = 429;
        res.set_content("{\"error\":\"slow down\"}", "application/json");
        return;
      }
      json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "SCORE: 4"}}}}}},
                   {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
    unsetenv("REWARDKIT_TEST_KEY");
  }

  ProviderProfile profile() const {
    ProviderProfile p;
    p.provider_id = "local";
    p.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    p.model = "local-model";
    p.auth_env_var = "REWARDKIT_TEST_KEY";
    p.modality = Modality::kVision;
    p.max_frames = 8;
    p.timeout_ms = 5000;
    return p;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  int hits_ = 0;
  int fail_first_ = 2;
  std::vector<std::string> auth_;
  std::vector<std::string> bodies_;
};

TEST_F(ChatServer, Http429TwiceThen200) {
  const std::string secret = "sk-test-0123456789-do-not-leak";
  setenv("REWARDKIT_TEST_KEY", secret.c_str(), 1);
  TempDir dir;
  write_text(dir / "frame.img", "\xff\xd8jpeg-ish");
  std::ostringstream logs;
  Logger logger(&logs, LogLevel::kDebug);
  SimulatedClock clock;
  GatewayOptions opt;
  opt.cache_root = dir / "cache";
  Gateway gw(opt, clock, logger);

  auto call = text_call(profile(), "rate this rollout");
  call.frames = {dir / "frame.img"};
  auto r = gw.call(call);
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(r.response_text, "SCORE: 4");
  EXPECT_EQ(r.prompt_tokens, 11);
  EXPECT_EQ(hits_, 3);
  for (const auto& a : auth_) EXPECT_EQ(a, "Bearer " + secret);

  auto sent = json::parse(bodies_.back());
  EXPECT_EQ(sent["model"], "local-model");
  EXPECT_EQ(sent["temperature"], 0.0);
  auto content = sent["messages"][0]["content"];
  ASSERT_EQ(content.size(), 2u);
  EXPECT_EQ(content[0]["text"], "rate this rollout");
  EXPECT_EQ(content[1]["image_url"]["url"].get<std::string>().rfind("data:image/jpeg;base64,", 0), 0u);

  EXPECT_TRUE(gw.call(call).from_cache);
  EXPECT_EQ(hits_, 3);

  // The credential appears nowhere we write.
  EXPECT_EQ(logs.str().find(secret), std::string::npos);
  EXPECT_EQ(slurp_tree(dir.path()).find(secret), std::string::npos);
  EXPECT_EQ(r.error.find(secret), std::string::npos);
}

TEST_F(ChatServer, MissingCredentialFailsBeforeNetwork) {
  unsetenv("REWARDKIT_TEST_KEY");
  Gateway gw({});
  try {
    gw.call(text_call(profile(), "q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("REWARDKIT_TEST_KEY"), std::string::npos);
  }
  EXPECT_EQ(hits_, 0);
  EXPECT_EQ(gw.stats().network_requests, 0);
}

TEST_F(ChatServer, PersistentFailureKeepsSecretOutOfErrors) {
  const std::string secret = "sk-another-secret-value";
  setenv("REWARDKIT_TEST_KEY", secret.c_str(), 1);
  fail_first_ = 100;
  std::ostringstream logs;
  Logger logger(&logs, LogLevel::kDebug);
  SimulatedClock clock;
  GatewayOptions opt;
  opt.max_attempts = 2;
  Gateway gw(opt, clock, logger);
  auto r = gw.call(text_call(profile(), "q"));
  EXPECT_EQ(r.status, CallStatus::kProviderError);
  EXPECT_EQ(hits_, 2);
  EXPECT_EQ(r.error.find(secret), std::string::npos);
  EXPECT_EQ(logs.str().find(secret), std::string::npos);
}

TEST(ChatTransport, UnreachableHostIsNetworkFailure) {
  SimulatedClock clock;
  GatewayOptions opt;
  opt.max_attempts = 2;
  Gateway gw(opt, clock);
  ProviderProfile p;
  p.provider_id = "down";
  p.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  p.timeout_ms = 500;
  auto r = gw.call(text_call(p, "q"));
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.attempts, 2);
}
