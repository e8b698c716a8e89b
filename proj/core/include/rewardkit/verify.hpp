#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rewardkit/clock.hpp"
#include "rewardkit/core_model.hpp"
#include "rewardkit/log.hpp"

struct sqlite3;

namespace rewardkit {

enum class ReviewStatus { kPending, kAccepted, kRejected };
enum class Decision { kAccept, kReject };
std::string_view to_string(ReviewStatus status);
std::string_view to_string(Decision decision);
ReviewStatus parse_review_status(std::string_view name);
Decision parse_decision(std::string_view name);

// A candidate example awaiting a human decision. The provided score is the
// episode's score.
struct ReviewItem {
  Episode episode;
  std::string validator_reasoning;
  ReviewStatus status = ReviewStatus::kPending;
  std::optional<std::string> leased_to;
  std::optional<std::int64_t> lease_expires_ms;

  const std::string& example_id() const { return episode.id; }
};

struct Verdict {
  std::string example_id;
  std::string annotator_id;
  Decision decision = Decision::kAccept;
  std::optional<std::string> note;
  std::int64_t timestamp_ms = 0;

  bool operator==(const Verdict&) const = default;
};

// Item as served to annotators, including the rubric and a media URL.
nlohmann::json to_json(const ReviewItem& item);
nlohmann::json to_json(const Verdict& verdict);
// {"episode": {...}, "validator_reasoning": "..."}; status is always pending.
ReviewItem review_item_from_json(const nlohmann::json& j);

struct EnqueueResult {
  std::int64_t added = 0;
  std::int64_t skipped = 0;
};

struct QueueStats {
  std::int64_t pending = 0;
  std::int64_t leased = 0;
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t verdicts = 0;
};

inline constexpr Clock::duration kDefaultLeaseTimeout{15 * 60 * 1000};

// Verification queue persisted in SQLite. Verdicts live in an append-only
// table (updates and deletes are refused by triggers). All operations are
// serialized through one connection.
class VerifyStore {
 public:
  // ":memory:" gives a throwaway store.
  explicit VerifyStore(const std::string& db_path, Clock& clock = system_clock(),
                       Clock::duration lease_timeout = kDefaultLeaseTimeout, Logger& logger = null_logger());
  ~VerifyStore();
  VerifyStore(const VerifyStore&) = delete;
  VerifyStore& operator=(const VerifyStore&) = delete;

  // Ids already in the store are skipped and counted.
  EnqueueResult enqueue(const std::vector<ReviewItem>& items);

  // A pending item not leased to someone else; the caller gets a fresh lease.
  // An annotator holding a live lease gets the same item back.
  std::optional<ReviewItem> next_item(const std::string& annotator_id);

  // Throws Error(kNotFound) for an unknown id and Error(kConflict) when the
  // item is no longer pending, is leased to another annotator, or already has
  // a verdict from this annotator. Stamps the verdict with the store clock.
  ReviewItem submit_verdict(Verdict verdict);

  std::optional<ReviewItem> get(const std::string& example_id);

  // Accepted episodes of `split`, ordered by id and marked verified. With a
  // target below the accepted count a seeded uniform subsample is returned.
  std::vector<Episode> export_verified(Split split, std::optional<std::size_t> target = std::nullopt,
                                       std::uint64_t seed = 0);

  std::vector<Verdict> verdicts();
  // Statuses recomputed from the verdict log alone.
  std::map<std::string, ReviewStatus> replay();
  // Statuses as stored on the items.
  std::map<std::string, ReviewStatus> statuses();
  QueueStats stats();

 private:
  std::optional<ReviewItem> load_item(const std::string& example_id);

  std::mutex mu_;
  sqlite3* db_ = nullptr;
  Clock& clock_;
  Clock::duration lease_timeout_;
  Logger& logger_;
};

struct VerifyServerOptions {
  std::string host = "127.0.0.1";
  // 0 picks a free port.
  int port = 8080;
  // Served at / when non-empty (the annotation UI build).
  std::filesystem::path static_dir;
};

// JSON API under /v1 over a VerifyStore:
//   GET  /v1/items/next?annotator=ID   200 item | 204 empty queue
//   GET  /v1/items/{id}                200 item | 404
//   POST /v1/items                     {"items":[...]} -> {"added","skipped"}
//   POST /v1/verdicts                  {"example_id","annotator_id","decision","note"?} -> item
//   GET  /v1/export?split=test&target=N&seed=S
//   GET  /v1/media/{id}                video bytes
//   GET  /v1/stats
class VerifyServer {
 public:
  VerifyServer(VerifyStore& store, VerifyServerOptions options, Logger& logger = null_logger());
  ~VerifyServer();

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Blocks serving on the calling thread.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rewardkit
