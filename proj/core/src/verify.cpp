#include "rewardkit/verify.hpp"

#include <sqlite3.h>

#include <set>

#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"
#include "rewardkit/sampling.hpp"

namespace rewardkit {

using nlohmann::json;

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS items (
  example_id TEXT PRIMARY KEY,
  seq INTEGER NOT NULL,
  episode TEXT NOT NULL,
  split TEXT,
  reasoning TEXT NOT NULL,
  status TEXT NOT NULL DEFAULT 'pending',
  lease_annotator TEXT,
  lease_expires INTEGER
);
CREATE INDEX IF NOT EXISTS items_pending ON items(status, seq);
CREATE TABLE IF NOT EXISTS verdicts (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  example_id TEXT NOT NULL REFERENCES items(example_id),
  annotator_id TEXT NOT NULL,
  decision TEXT NOT NULL CHECK (decision IN ('accept', 'reject')),
  note TEXT,
  ts INTEGER NOT NULL,
  UNIQUE (example_id, annotator_id)
);
CREATE TRIGGER IF NOT EXISTS verdicts_no_update BEFORE UPDATE ON verdicts
BEGIN SELECT RAISE(ABORT, 'verdict log is append-only'); END;
CREATE TRIGGER IF NOT EXISTS verdicts_no_delete BEFORE DELETE ON verdicts
BEGIN SELECT RAISE(ABORT, 'verdict log is append-only'); END;
)sql";

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail("prepare");
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int i, std::string_view v) { return bind(i, std::string(v)); }
  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Stmt& bind_null(int i) {
    sqlite3_bind_null(stmt_, i);
    return *this;
  }
  // True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if ((rc & 0xff) == SQLITE_CONSTRAINT) {
      throw Error(ErrorKind::kConflict, sqlite3_errmsg(db_));
    }
    fail("step");
    return false;
  }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  [[noreturn]] void fail(const char* what) const {
    throw Error(ErrorKind::kIo, std::string("sqlite ") + what + ": " + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* msg = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &msg) != SQLITE_OK) {
    std::string text = msg ? msg : "unknown error";
    sqlite3_free(msg);
    throw Error(ErrorKind::kIo, "sqlite: " + text);
  }
}

// Rolls back unless committed.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

constexpr const char* kItemColumns =
    "SELECT example_id, episode, reasoning, status, lease_annotator, lease_expires FROM items";

ReviewItem item_from_row(const Stmt& s) {
  ReviewItem item;
  item.episode = episode_from_json(json::parse(s.text(1)));
  item.validator_reasoning = s.text(2);
  item.status = parse_review_status(s.text(3));
  if (!s.is_null(4)) item.leased_to = s.text(4);
  if (!s.is_null(5)) item.lease_expires_ms = s.int64(5);
  return item;
}

}  // namespace

std::string_view to_string(ReviewStatus status) {
  switch (status) {
    case ReviewStatus::kPending: return "pending";
    case ReviewStatus::kAccepted: return "accepted";
    case ReviewStatus::kRejected: return "rejected";
  }
  return "pending";
}

std::string_view to_string(Decision decision) { return decision == Decision::kAccept ? "accept" : "reject"; }

ReviewStatus parse_review_status(std::string_view name) {
  if (name == "pending") return ReviewStatus::kPending;
  if (name == "accepted") return ReviewStatus::kAccepted;
  if (name == "rejected") return ReviewStatus::kRejected;
  throw Error(ErrorKind::kValidation, "unknown review status '" + std::string(name) + "'");
}

Decision parse_decision(std::string_view name) {
  if (name == "accept") return Decision::kAccept;
  if (name == "reject") return Decision::kReject;
  throw Error(ErrorKind::kValidation, "decision must be 'accept' or 'reject'");
}

json to_json(const ReviewItem& item) {
  const auto& rubric = Rubric::standard();
  json levels = json::array();
  for (const auto& l : rubric.levels()) {
    levels.push_back({{"score", l.score}, {"name", l.name}, {"criterion", l.criterion}});
  }
  json j = {{"example_id", item.episode.id},
            {"video_ref", item.episode.video_ref},
            {"media_url", "/v1/media/" + item.episode.id},
            {"task_text", item.episode.task_text},
            {"provided_score", item.episode.score},
            {"provenance", to_string(item.episode.provenance)},
            {"split", item.episode.split ? json(to_string(*item.episode.split)) : json(nullptr)},
            {"rubric", {{"text", rubric.text()}, {"levels", levels}}},
            {"validator_reasoning", item.validator_reasoning},
            {"status", to_string(item.status)},
            {"leased_to", item.leased_to ? json(*item.leased_to) : json(nullptr)},
            {"lease_expires_ms", item.lease_expires_ms ? json(*item.lease_expires_ms) : json(nullptr)}};
  return j;
}

json to_json(const Verdict& v) {
  return {{"example_id", v.example_id},
          {"annotator_id", v.annotator_id},
          {"decision", to_string(v.decision)},
          {"note", v.note ? json(*v.note) : json(nullptr)},
          {"timestamp_ms", v.timestamp_ms}};
}

ReviewItem review_item_from_json(const json& j) {
  if (!j.is_object() || !j.contains("episode")) {
    throw Error(ErrorKind::kValidation, "review item needs an 'episode' object");
  }
  ReviewItem item;
  auto episode = j.at("episode");
  if (!episode.contains("schema_version")) episode["schema_version"] = kSchemaVersion;
  item.episode = episode_from_json(episode);
  if (j.contains("validator_reasoning") && j.at("validator_reasoning").is_string()) {
    item.validator_reasoning = j.at("validator_reasoning").get<std::string>();
  }
  return item;
}

VerifyStore::VerifyStore(const std::string& db_path, Clock& clock, Clock::duration lease_timeout, Logger& logger)
    : clock_(clock), lease_timeout_(lease_timeout), logger_(logger) {
  if (lease_timeout_ <= Clock::duration::zero()) throw Error(ErrorKind::kConfig, "lease timeout must be positive");
  if (db_path != ":memory:") {
    std::error_code ec;
    const auto parent = std::filesystem::path(db_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  }
  if (sqlite3_open_v2(db_path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(ErrorKind::kIo, "cannot open verification store " + db_path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA foreign_keys = ON");
  if (db_path != ":memory:") exec(db_, "PRAGMA journal_mode = WAL");
  exec(db_, kSchema);
}

VerifyStore::~VerifyStore() { sqlite3_close(db_); }

EnqueueResult VerifyStore::enqueue(const std::vector<ReviewItem>& items) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  std::int64_t seq = 0;
  {
    Stmt s(db_, "SELECT COALESCE(MAX(seq), 0) FROM items");
    if (s.step()) seq = s.int64(0);
  }
  EnqueueResult result;
  for (const auto& item : items) {
    Stmt s(db_,
           "INSERT INTO items (example_id, seq, episode, split, reasoning, status) VALUES (?1, ?2, ?3, ?4, ?5, "
           "'pending') ON CONFLICT(example_id) DO NOTHING");
    s.bind(1, item.episode.id).bind(2, seq + 1).bind(3, to_json(item.episode).dump()).bind(5, item.validator_reasoning);
    if (item.episode.split) {
      s.bind(4, to_string(*item.episode.split));
    } else {
      s.bind_null(4);
    }
    s.step();
    if (sqlite3_changes(db_) == 1) {
      ++seq;
      ++result.added;
    } else {
      ++result.skipped;
    }
  }
  tx.commit();
  if (result.skipped > 0) logger_.warn("enqueue_skipped", {{"count", result.skipped}});
  return result;
}

std::optional<ReviewItem> VerifyStore::next_item(const std::string& annotator_id) {
  if (annotator_id.empty()) throw Error(ErrorKind::kValidation, "annotator id is required");
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  const auto now = clock_.now_ms();
  std::string id;
  {
    Stmt held(db_, "SELECT example_id FROM items WHERE status = 'pending' AND lease_annotator = ?1 AND "
                   "lease_expires > ?2 ORDER BY seq LIMIT 1");
    held.bind(1, annotator_id).bind(2, now);
    if (held.step()) id = held.text(0);
  }
  if (id.empty()) {
    Stmt free(db_, "SELECT s.example_id FROM items s WHERE s.status = 'pending' AND "
                   "(s.lease_annotator IS NULL OR s.lease_expires <= ?1) AND NOT EXISTS "
                   "(SELECT 1 FROM verdicts v WHERE v.example_id = s.example_id AND v.annotator_id = ?2) "
                   "ORDER BY s.seq LIMIT 1");
    free.bind(1, now).bind(2, annotator_id);
    if (!free.step()) return std::nullopt;
    id = free.text(0);
  }
  Stmt lease(db_, "UPDATE items SET lease_annotator = ?1, lease_expires = ?2 WHERE example_id = ?3");
  lease.bind(1, annotator_id).bind(2, now + lease_timeout_.count()).bind(3, id);
  lease.step();
  tx.commit();
  return load_item(id);
}

ReviewItem VerifyStore::submit_verdict(Verdict verdict) {
  if (verdict.annotator_id.empty()) throw Error(ErrorKind::kValidation, "annotator id is required");
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  auto item = load_item(verdict.example_id);
  if (!item) throw Error(ErrorKind::kNotFound, "no review item '" + verdict.example_id + "'");
  {
    Stmt s(db_, "SELECT 1 FROM verdicts WHERE example_id = ?1 AND annotator_id = ?2");
    s.bind(1, verdict.example_id).bind(2, verdict.annotator_id);
    if (s.step()) {
      throw Error(ErrorKind::kConflict, verdict.annotator_id + " already judged '" + verdict.example_id + "'");
    }
  }
  if (item->status != ReviewStatus::kPending) {
    throw Error(ErrorKind::kConflict, "item '" + verdict.example_id + "' is already " +
                                          std::string(to_string(item->status)));
  }
  const auto now = clock_.now_ms();
  if (item->leased_to && *item->leased_to != verdict.annotator_id && item->lease_expires_ms &&
      *item->lease_expires_ms > now) {
    throw Error(ErrorKind::kConflict, "item '" + verdict.example_id + "' is leased to another annotator");
  }
  verdict.timestamp_ms = now;
  {
    Stmt s(db_, "INSERT INTO verdicts (example_id, annotator_id, decision, note, ts) VALUES (?1, ?2, ?3, ?4, ?5)");
    s.bind(1, verdict.example_id).bind(2, verdict.annotator_id).bind(3, to_string(verdict.decision)).bind(5, now);
    if (verdict.note) {
      s.bind(4, *verdict.note);
    } else {
      s.bind_null(4);
    }
    s.step();
  }
  const auto status = verdict.decision == Decision::kAccept ? ReviewStatus::kAccepted : ReviewStatus::kRejected;
  {
    Stmt s(db_, "UPDATE items SET status = ?1, lease_annotator = NULL, lease_expires = NULL WHERE example_id = ?2");
    s.bind(1, to_string(status)).bind(2, verdict.example_id);
    s.step();
  }
  tx.commit();
  logger_.info("verdict", {{"example_id", verdict.example_id},
                           {"annotator_id", verdict.annotator_id},
                           {"decision", to_string(verdict.decision)}});
  return *load_item(verdict.example_id);
}

std::optional<ReviewItem> VerifyStore::load_item(const std::string& example_id) {
  Stmt s(db_, (std::string(kItemColumns) + " WHERE example_id = ?1").c_str());
  s.bind(1, example_id);
  if (!s.step()) return std::nullopt;
  return item_from_row(s);
}

std::optional<ReviewItem> VerifyStore::get(const std::string& example_id) {
  std::lock_guard lock(mu_);
  return load_item(example_id);
}

std::vector<Episode> VerifyStore::export_verified(Split split, std::optional<std::size_t> target, std::uint64_t seed) {
  std::vector<Episode> accepted;
  {
    std::lock_guard lock(mu_);
    Stmt s(db_, "SELECT episode FROM items WHERE status = 'accepted' AND split = ?1 ORDER BY example_id");
    s.bind(1, to_string(split));
    while (s.step()) {
      auto e = episode_from_json(json::parse(s.text(0)));
      e.verified = true;
      accepted.push_back(std::move(e));
    }
  }
  if (accepted.empty()) {
    logger_.warn("export_empty", {{"split", to_string(split)}});
    return accepted;
  }
  if (!target || *target >= accepted.size()) return accepted;
  auto rng = SampleRng::for_name(seed, "verified-export");
  std::vector<Episode> out;
  for (auto i : sample_indices(accepted.size(), *target, rng)) out.push_back(std::move(accepted[i]));
  return out;
}

std::vector<Verdict> VerifyStore::verdicts() {
  std::lock_guard lock(mu_);
  std::vector<Verdict> out;
  Stmt s(db_, "SELECT example_id, annotator_id, decision, note, ts FROM verdicts ORDER BY id");
  while (s.step()) {
    Verdict v;
    v.example_id = s.text(0);
    v.annotator_id = s.text(1);
    v.decision = parse_decision(s.text(2));
    if (!s.is_null(3)) v.note = s.text(3);
    v.timestamp_ms = s.int64(4);
    out.push_back(std::move(v));
  }
  return out;
}

std::map<std::string, ReviewStatus> VerifyStore::statuses() {
  std::lock_guard lock(mu_);
  std::map<std::string, ReviewStatus> out;
  Stmt s(db_, "SELECT example_id, status FROM items");
  while (s.step()) out[s.text(0)] = parse_review_status(s.text(1));
  return out;
}

std::map<std::string, ReviewStatus> VerifyStore::replay() {
  std::map<std::string, ReviewStatus> out;
  {
    std::lock_guard lock(mu_);
    Stmt s(db_, "SELECT example_id FROM items");
    while (s.step()) out[s.text(0)] = ReviewStatus::kPending;
  }
  for (const auto& v : verdicts()) {
    auto& status = out[v.example_id];
    if (status == ReviewStatus::kPending) {
      status = v.decision == Decision::kAccept ? ReviewStatus::kAccepted : ReviewStatus::kRejected;
    }
  }
  return out;
}

QueueStats VerifyStore::stats() {
  std::lock_guard lock(mu_);
  QueueStats q;
  const auto now = clock_.now_ms();
  Stmt s(db_, "SELECT status, COUNT(*), SUM(CASE WHEN lease_annotator IS NOT NULL AND lease_expires > ?1 "
              "THEN 1 ELSE 0 END) FROM items GROUP BY status");
  s.bind(1, now);
  while (s.step()) {
    const auto status = parse_review_status(s.text(0));
    if (status == ReviewStatus::kPending) {
      q.pending = s.int64(1);
      q.leased = s.int64(2);
    } else if (status == ReviewStatus::kAccepted) {
      q.accepted = s.int64(1);
    } else {
      q.rejected = s.int64(1);
    }
  }
  Stmt v(db_, "SELECT COUNT(*) FROM verdicts");
  if (v.step()) q.verdicts = v.int64(0);
  return q;
}

}  // namespace rewardkit
