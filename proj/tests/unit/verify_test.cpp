#include <gtest/gtest.h>
#include <sqlite3.h>

#include <set>
#include <sstream>
#include <thread>

#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"
#include "rewardkit/verify.hpp"
#include "test_support.hpp"

using namespace rewardkit;
using namespace rewardkit::testing;
namespace fs = std::filesystem;

namespace {

ReviewItem item(const std::string& id, Split split = Split::kTest) {
  ReviewItem it;
  it.episode = demo_episode(id, "open the drawer");
  it.episode.score = 3;
  it.episode.split = split;
  it.episode.provenance = Provenance::kCounterfactual;
  it.episode.parent_id = "parent/" + id;
  it.validator_reasoning = "looks right";
  return it;
}

std::vector<ReviewItem> items(int n, Split split = Split::kTest, int from = 0) {
  std::vector<ReviewItem> out;
  for (int i = from; i < from + n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ex%03d", i);
    out.push_back(item(buf, split));
  }
  return out;
}

Verdict verdict(const std::string& id, const std::string& who, Decision d) {
  Verdict v;
  v.example_id = id;
  v.annotator_id = who;
  v.decision = d;
  return v;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kConfig;
}

}  // namespace

TEST(VerifyStore, EnqueueIsIdempotent) {
  VerifyStore store(":memory:");
  auto first = store.enqueue(items(5));
  EXPECT_EQ(first.added, 5);
  EXPECT_EQ(first.skipped, 0);
  auto again = store.enqueue(items(5));
  EXPECT_EQ(again.added, 0);
  EXPECT_EQ(again.skipped, 5);
  auto overlap = store.enqueue(items(5, Split::kTest, 2));
  EXPECT_EQ(overlap.added, 2);
  EXPECT_EQ(overlap.skipped, 3);
  EXPECT_EQ(store.stats().pending, 7);
}

TEST(VerifyStore, ItemRoundTripsEpisode) {
  VerifyStore store(":memory:");
  store.enqueue({item("a")});
  auto got = store.get("a");
  ASSERT_TRUE(got);
  EXPECT_EQ(got->episode, item("a").episode);
  EXPECT_EQ(got->validator_reasoning, "looks right");
  EXPECT_EQ(got->status, ReviewStatus::kPending);
  EXPECT_FALSE(store.get("zzz"));
  auto j = to_json(*got);
  EXPECT_EQ(j["provided_score"], 3);
  EXPECT_EQ(j["example_id"], "a");
  EXPECT_EQ(j["media_url"], "/v1/media/a");
  EXPECT_EQ(j["rubric"]["text"], Rubric::standard().text());
  EXPECT_EQ(j["rubric"]["levels"].size(), 5u);
  auto back = review_item_from_json({{"episode", to_json(got->episode)}, {"validator_reasoning", "again"}});
  EXPECT_EQ(back.episode, got->episode);
  EXPECT_EQ(back.validator_reasoning, "again");
  EXPECT_EQ(back.status, ReviewStatus::kPending);
}

TEST(VerifyStore, LeaseGivesSameItemBackAndExcludesOthers) {
  SimulatedClock clock;
  VerifyStore store(":memory:", clock);
  store.enqueue(items(2));
  auto a1 = store.next_item("alice");
  auto a2 = store.next_item("alice");
  auto b = store.next_item("bob");
  ASSERT_TRUE(a1 && a2 && b);
  EXPECT_EQ(a1->example_id(), a2->example_id());
  EXPECT_NE(a1->example_id(), b->example_id());
  EXPECT_FALSE(store.next_item("carol"));
  EXPECT_EQ(store.stats().leased, 2);
  EXPECT_EQ(kind_of([&] { store.submit_verdict(verdict(a1->example_id(), "bob", Decision::kAccept)); }),
            ErrorKind::kConflict);
}

TEST(VerifyStore, ExpiredLeaseReturnsToQueue) {
  SimulatedClock clock;
  VerifyStore store(":memory:", clock, std::chrono::milliseconds(1000));
  store.enqueue(items(1));
  auto a = store.next_item("alice");
  ASSERT_TRUE(a);
  EXPECT_FALSE(store.next_item("bob"));
  clock.advance(std::chrono::milliseconds(999));
  EXPECT_FALSE(store.next_item("bob"));
  clock.advance(std::chrono::milliseconds(1));
  auto b = store.next_item("bob");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->example_id(), a->example_id());
  EXPECT_EQ(b->leased_to, "bob");
  EXPECT_EQ(b->lease_expires_ms, 2000);
  // Alice lost the lease to Bob.
  EXPECT_EQ(kind_of([&] { store.submit_verdict(verdict(a->example_id(), "alice", Decision::kAccept)); }),
            ErrorKind::kConflict);
  EXPECT_EQ(store.submit_verdict(verdict(b->example_id(), "bob", Decision::kReject)).status, ReviewStatus::kRejected);
}

TEST(VerifyStore, ConcurrentAnnotatorsNeverShareAnItem) {
  VerifyStore store(":memory:");
  store.enqueue(items(40));
  std::mutex mu;
  std::multiset<std::string> seen;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      const auto who = "annotator" + std::to_string(t);
      while (auto it = store.next_item(who)) {
        {
          std::lock_guard lock(mu);
          seen.insert(it->example_id());
        }
        store.submit_verdict(verdict(it->example_id(), who, t % 2 ? Decision::kAccept : Decision::kReject));
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(seen.size(), 40u);
  EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 40u);
  auto s = store.stats();
  EXPECT_EQ(s.pending, 0);
  EXPECT_EQ(s.accepted + s.rejected, 40);
  EXPECT_EQ(s.verdicts, 40);
  EXPECT_EQ(store.replay(), store.statuses());
}

TEST(VerifyStore, SubmitConflicts) {
  SimulatedClock clock;
  VerifyStore store(":memory:", clock);
  store.enqueue(items(2));
  EXPECT_EQ(kind_of([&] { store.submit_verdict(verdict("nope", "alice", Decision::kAccept)); }), ErrorKind::kNotFound);
  EXPECT_EQ(kind_of([&] { store.submit_verdict(verdict("ex000", "", Decision::kAccept)); }), ErrorKind::kValidation);
  auto v = verdict("ex000", "alice", Decision::kAccept);
  v.note = "fine";
  clock.advance(std::chrono::milliseconds(42));
  auto out = store.submit_verdict(v);
  EXPECT_EQ(out.status, ReviewStatus::kAccepted);
  EXPECT_EQ(kind_of([&] { store.submit_verdict(verdict("ex000", "alice", Decision::kReject)); }), ErrorKind::kConflict);
  EXPECT_EQ(kind_of([&] { store.submit_verdict(verdict("ex000", "bob", Decision::kReject)); }), ErrorKind::kConflict);
  auto log = store.verdicts();
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].note, "fine");
  EXPECT_EQ(log[0].timestamp_ms, 42);
  EXPECT_EQ(store.get("ex000")->status, ReviewStatus::kAccepted);
}

TEST(VerifyStore, ExportAcceptedOnly) {
  VerifyStore store(":memory:");
  store.enqueue(items(15));
  store.enqueue(items(3, Split::kTrain, 100));
  for (int i = 0; i < 15; ++i) {
    auto id = items(1, Split::kTest, i)[0].example_id();
    store.submit_verdict(verdict(id, "alice", i < 10 ? Decision::kAccept : Decision::kReject));
  }
  store.submit_verdict(verdict("ex100", "alice", Decision::kAccept));
  auto all = store.export_verified(Split::kTest);
  ASSERT_EQ(all.size(), 10u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_TRUE(all[i].verified);
    EXPECT_EQ(all[i].split, Split::kTest);
    if (i) {
      EXPECT_LT(all[i - 1].id, all[i].id);
    }
  }
  EXPECT_EQ(store.export_verified(Split::kTrain).size(), 1u);

  auto four = store.export_verified(Split::kTest, 4, 9);
  ASSERT_EQ(four.size(), 4u);
  EXPECT_EQ(store.export_verified(Split::kTest, 4, 9), four);
  std::set<std::string> ids;
  for (const auto& e : four) ids.insert(e.id);
  EXPECT_EQ(ids.size(), 4u);
  EXPECT_EQ(store.export_verified(Split::kTest, 50).size(), 10u);
}

TEST(VerifyStore, EmptyExportWarns) {
  std::ostringstream logs;
  Logger logger(&logs);
  SimulatedClock clock;
  VerifyStore store(":memory:", clock, kDefaultLeaseTimeout, logger);
  store.enqueue(items(3));
  store.submit_verdict(verdict("ex000", "alice", Decision::kReject));
  EXPECT_TRUE(store.export_verified(Split::kTest).empty());
  EXPECT_NE(logs.str().find("export_empty"), std::string::npos);
}

TEST(VerifyStore, PersistsAndVerdictLogIsAppendOnly) {
  TempDir dir;
  const auto db = (dir / "verify.sqlite").string();
  {
    VerifyStore store(db);
    store.enqueue(items(3));
    store.submit_verdict(verdict("ex001", "alice", Decision::kAccept));
  }
  {
    VerifyStore store(db);
    EXPECT_EQ(store.get("ex001")->status, ReviewStatus::kAccepted);
    EXPECT_EQ(store.stats().verdicts, 1);
    EXPECT_EQ(store.enqueue(items(3)).skipped, 3);
  }
  sqlite3* raw = nullptr;
  ASSERT_EQ(sqlite3_open(db.c_str(), &raw), SQLITE_OK);
  char* err = nullptr;
  EXPECT_NE(sqlite3_exec(raw, "UPDATE verdicts SET decision = 'reject'", nullptr, nullptr, &err), SQLITE_OK);
  ASSERT_NE(err, nullptr);
  EXPECT_NE(std::string(err).find("append-only"), std::string::npos);
  sqlite3_free(err);
  EXPECT_NE(sqlite3_exec(raw, "DELETE FROM verdicts", nullptr, nullptr, nullptr), SQLITE_OK);
  sqlite3_close(raw);
  VerifyStore store(db);
  EXPECT_EQ(store.verdicts().size(), 1u);
}

TEST(VerifyStore, ReplayMatchesStatuses) {
  VerifyStore store(":memory:");
  store.enqueue(items(6));
  store.submit_verdict(verdict("ex000", "a", Decision::kAccept));
  store.submit_verdict(verdict("ex002", "b", Decision::kReject));
  store.submit_verdict(verdict("ex005", "a", Decision::kAccept));
  auto replayed = store.replay();
  EXPECT_EQ(replayed, store.statuses());
  EXPECT_EQ(replayed.at("ex001"), ReviewStatus::kPending);
  EXPECT_EQ(replayed.at("ex002"), ReviewStatus::kRejected);
}

TEST(VerifyStore, Names) {
  EXPECT_EQ(parse_decision("accept"), Decision::kAccept);
  EXPECT_EQ(parse_decision("reject"), Decision::kReject);
  EXPECT_THROW(parse_decision("maybe"), Error);
  for (auto s : {ReviewStatus::kPending, ReviewStatus::kAccepted, ReviewStatus::kRejected}) {
    EXPECT_EQ(parse_review_status(to_string(s)), s);
  }
  EXPECT_THROW(VerifyStore(":memory:", system_clock(), Clock::duration::zero()), Error);
  EXPECT_THROW(review_item_from_json({{"validator_reasoning", "x"}}), Error);
}
