#include <gtest/gtest.h>
#include <httplib.h>

#include "rewardkit/records.hpp"
#include "rewardkit/verify.hpp"
#include "test_support.hpp"

using namespace rewardkit;
using namespace rewardkit::testing;
using nlohmann::json;

namespace {

json item_json(const std::string& id, const std::string& video_ref = "videos/none.mp4") {
  auto e = demo_episode(id, "open the drawer");
  e.score = 2;
  e.split = Split::kTest;
  e.provenance = Provenance::kCounterfactual;
  e.parent_id = "p/" + id;
  e.video_ref = video_ref;
  return {{"episode", to_json(e)}, {"validator_reasoning", "ok"}};
}

class Server : public ::testing::Test {
 protected:
  void SetUp() override {
    VerifyServerOptions opt;
    opt.port = 0;
    server_ = std::make_unique<VerifyServer>(store_, opt);
    port_ = server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override { server_->stop(); }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }
  json verdict(const std::string& id, const std::string& who, const std::string& decision) {
    return {{"example_id", id}, {"annotator_id", who}, {"decision", decision}};
  }

  TempDir dir_;
  SimulatedClock clock_;
  VerifyStore store_{":memory:", clock_};
  std::unique_ptr<VerifyServer> server_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(Server, ReviewFlow) {
  auto r = post("/v1/items", {{"items", {item_json("a"), item_json("b"), item_json("c")}}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body), (json{{"added", 3}, {"skipped", 0}}));
  r = post("/v1/items", {{"items", {item_json("a")}}});
  EXPECT_EQ(json::parse(r->body)["skipped"], 1);

  for (const auto& [who, decision] : std::vector<std::pair<std::string, std::string>>{
           {"ann1", "accept"}, {"ann2", "accept"}, {"ann3", "reject"}}) {
    auto next = client_->Get("/v1/items/next?annotator=" + who);
    ASSERT_TRUE(next);
    ASSERT_EQ(next->status, 200);
    auto item = json::parse(next->body);
    EXPECT_EQ(item["status"], "pending");
    EXPECT_EQ(item["leased_to"], who);
    EXPECT_EQ(item["provided_score"], 2);
    EXPECT_EQ(item["rubric"]["levels"].size(), 5u);
    auto done = post("/v1/verdicts", verdict(item["example_id"], who, decision));
    ASSERT_EQ(done->status, 200) << done->body;
    EXPECT_EQ(json::parse(done->body)["status"], decision == "accept" ? "accepted" : "rejected");
  }

  auto empty = client_->Get("/v1/items/next?annotator=ann4");
  EXPECT_EQ(empty->status, 204);

  auto again = post("/v1/verdicts", verdict("a", "ann1", "reject"));
  EXPECT_EQ(again->status, 409);
  EXPECT_EQ(json::parse(again->body)["error"]["kind"], "conflict");

  auto exported = client_->Get("/v1/export?split=test");
  ASSERT_EQ(exported->status, 200);
  auto body = json::parse(exported->body);
  EXPECT_EQ(body["count"], 2);
  for (const auto& e : body["episodes"]) EXPECT_EQ(e["verified"], true);
  EXPECT_EQ(json::parse(client_->Get("/v1/export?split=test&target=1&seed=3")->body)["count"], 1);

  auto stats = json::parse(client_->Get("/v1/stats")->body);
  EXPECT_EQ(stats["accepted"], 2);
  EXPECT_EQ(stats["rejected"], 1);
  EXPECT_EQ(stats["pending"], 0);
  EXPECT_EQ(stats["verdicts"], 3);
}

TEST_F(Server, ItemLookup) {
  post("/v1/items", {{"items", {item_json("a")}}});
  auto r = client_->Get("/v1/items/a");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["task_text"], "open the drawer");
  r = client_->Get("/v1/items/zzz");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(json::parse(r->body)["error"]["kind"], "not_found");
}

TEST_F(Server, BadRequests) {
  EXPECT_EQ(client_->Get("/v1/items/next")->status, 400);
  EXPECT_EQ(client_->Post("/v1/items", "{not json", "application/json")->status, 400);
  EXPECT_EQ(post("/v1/items", {{"nope", 1}})->status, 400);
  EXPECT_EQ(post("/v1/items", {{"items", {{{"validator_reasoning", "x"}}}}})->status, 400);
  post("/v1/items", {{"items", {item_json("a")}}});
  EXPECT_EQ(post("/v1/verdicts", verdict("a", "ann", "maybe"))->status, 400);
  EXPECT_EQ(post("/v1/verdicts", verdict("", "ann", "accept"))->status, 400);
  EXPECT_EQ(post("/v1/verdicts", verdict("ghost", "ann", "accept"))->status, 404);
  EXPECT_EQ(client_->Get("/v1/export?split=sideways")->status, 400);
  EXPECT_EQ(client_->Get("/v1/export?target=-1")->status, 400);
}

TEST_F(Server, LeaseConflictOverHttp) {
  post("/v1/items", {{"items", {item_json("a")}}});
  ASSERT_EQ(client_->Get("/v1/items/next?annotator=ann1")->status, 200);
  EXPECT_EQ(client_->Get("/v1/items/next?annotator=ann2")->status, 204);
  EXPECT_EQ(post("/v1/verdicts", verdict("a", "ann2", "accept"))->status, 409);
  EXPECT_EQ(post("/v1/verdicts", verdict("a", "ann1", "accept"))->status, 200);
}

TEST_F(Server, MediaStreamsVideoBytes) {
  std::string bytes;
  for (int i = 0; i < 200000; ++i) bytes += static_cast<char>(i * 7 % 251);
  write_text(dir_ / "clip.mp4", bytes);
  post("/v1/items", {{"items", {item_json("a", (dir_ / "clip.mp4").string()), item_json("b")}}});
  auto r = client_->Get("/v1/media/a");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "video/mp4");
  EXPECT_EQ(r->body, bytes);

  auto part = client_->Get("/v1/media/a", {{"Range", "bytes=100-199"}});
  EXPECT_EQ(part->status, 206);
  EXPECT_EQ(part->body, bytes.substr(100, 100));

  EXPECT_EQ(client_->Get("/v1/media/b")->status, 404);
  EXPECT_EQ(client_->Get("/v1/media/zzz")->status, 404);
}
