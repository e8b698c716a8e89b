#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "rewardkit/augmentation.hpp"
#include "rewardkit/config.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/eval.hpp"
#include "rewardkit/ingestion.hpp"
#include "rewardkit/log.hpp"
#include "rewardkit/media.hpp"
#include "rewardkit/provider.hpp"
#include "rewardkit/records.hpp"
#include "rewardkit/verify.hpp"

namespace rewardkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kInterrupted = 130;

struct Env {
  RunConfig config;
  std::string digest;
  Logger& logger;
  std::ostream& out;
  const std::atomic<bool>* cancel;

  bool cancelled() const { return cancel && cancel->load(); }
};

RunConfig load_or_default(const std::string& path) {
  if (path.empty()) return config_from_json(json::object(), fs::current_path());
  return load_config(path);
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& config, Logger& logger) {
  auto gateway = std::make_unique<Gateway>(config.gateway, system_clock(), logger);
  for (const auto& [id, script] : config.mock_scripts) {
    const auto& profile = config.provider(id);
    gateway->mock_provider(MockScript::load(script), id, profile.modality, profile.max_frames);
  }
  return gateway;
}

void log_gateway(Logger& logger, const Gateway& gateway) {
  const auto s = gateway.stats();
  logger.info("gateway_stats",
              {{"calls", s.calls}, {"network_requests", s.network_requests}, {"cache_hits", s.cache_hits}});
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> manifests;
  std::string out;
  std::optional<std::size_t> cap;
  std::optional<std::uint64_t> seed;
};

int cmd_ingest(Env& env, const IngestArgs& a) {
  const auto cap = a.cap.value_or(env.config.ingest.cap);
  const auto seed = a.seed.value_or(env.config.ingest.seed);
  if (cap < 1) throw Error(ErrorKind::kConfig, "--cap must be positive");

  std::vector<Episode> episodes;
  std::vector<Rejection> rejections;
  std::set<std::string, std::less<>> ids;
  bool invalid = false;
  json per_source = json::array();
  for (const auto& path : a.manifests) {
    auto loaded = load_manifest(path, false);
    rejections.insert(rejections.end(), loaded.rejections.begin(), loaded.rejections.end());
    if (loaded.manifest.entries.empty()) {
      env.logger.error("manifest_invalid", {{"path", path}, {"rejected", loaded.rejections.size()}});
      invalid = true;
      continue;
    }
    const auto sampled = subsample(loaded.manifest, cap, seed);
    auto normalized = normalize_entries(sampled);
    rejections.insert(rejections.end(), normalized.rejections.begin(), normalized.rejections.end());
    std::size_t kept = 0;
    for (auto& e : canonicalize(std::move(normalized.episodes))) {
      if (!ids.insert(e.id).second) {
        rejections.push_back({path, 0, e.id, "id already present in an earlier manifest", {}});
        continue;
      }
      episodes.push_back(std::move(e));
      ++kept;
    }
    per_source.push_back({{"dataset", loaded.manifest.dataset_name},
                          {"entries", loaded.manifest.entries.size()},
                          {"kept", kept}});
  }

  auto rejection_path = fs::path(a.out);
  rejection_path += ".rejections.jsonl";
  if (!rejections.empty()) {
    write_rejections(rejection_path, rejections);
    env.out << "rejections: " << rejection_path.string() << " (" << rejections.size() << ")\n";
  }
  if (invalid) throw Error(ErrorKind::kValidation, "invalid manifest; see " + rejection_path.string());
  write_episodes(a.out, episodes, env.digest);
  env.out << json({{"episodes", episodes.size()}, {"cap", cap}, {"sources", per_source}}).dump() << "\n";
  return 0;
}

// ---- split ----------------------------------------------------------------

struct SplitArgs {
  std::string in;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool per_source = false;
};

int cmd_split(Env& env, const SplitArgs& a) {
  auto options = env.config.splits;
  if (a.seed) options.seed = *a.seed;
  if (a.per_source) options.per_source = true;
  auto episodes = build_splits(read_episodes(a.in), options);
  const auto counts = split_accounting(episodes);
  write_episodes(a.out, episodes, env.digest);
  env.out << json({{"train", counts.train}, {"val", counts.val}, {"test", counts.test}, {"total", counts.total}}).dump()
          << "\n";
  return 0;
}

// ---- augment --------------------------------------------------------------

struct AugmentArgs {
  std::string in;
  std::string out;
  std::string mode = "both";
  bool disable_counterfactual = false;
  bool disable_clipping = false;
  int workers = 0;
};

struct AugmentOutcome {
  std::vector<Episode> children;
  std::vector<std::pair<std::string, std::string>> reasoning;  // child id -> validator reasoning
  bool failed = false;
};

int cmd_augment(Env& env, const AugmentArgs& a) {
  if (a.mode != "counterfactual" && a.mode != "clip" && a.mode != "both") {
    throw Error(ErrorKind::kConfig, "--mode must be counterfactual, clip or both");
  }
  const bool counterfactual = (a.mode != "clip") && !a.disable_counterfactual &&
                              !env.config.ablation.disable_counterfactual;
  const bool clipping = (a.mode != "counterfactual") && !a.disable_clipping && !env.config.ablation.disable_clipping;

  const auto episodes = read_episodes(a.in);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (episodes[i].score == kMaxScore && !episodes[i].parent_id) candidates.push_back(i);
  }
  env.logger.info("augment_start", {{"episodes", episodes.size()},
                                    {"candidates", candidates.size()},
                                    {"counterfactual", counterfactual},
                                    {"clipping", clipping}});

  auto gateway = make_gateway(env.config, env.logger);
  MediaOps media(env.config.encoder, env.logger);
  MediaFrameSource frames(media, env.config.paths.work_root, env.config.pipeline.frame_rate_hz);
  AugmentationPipeline pipeline(*gateway, env.config.stage_profiles(), env.config.templates(), env.config.verbs(),
                                env.config.pipeline, env.config.paths.work_root, frames, env.logger);

  std::vector<AugmentOutcome> outcomes(episodes.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr fatal;
  auto work = [&] {
    while (!env.cancelled()) {
      {
        std::lock_guard lock(mu);
        if (fatal) return;
      }
      const auto slot = next.fetch_add(1);
      if (slot >= candidates.size()) return;
      const auto& episode = episodes[candidates[slot]];
      auto& outcome = outcomes[candidates[slot]];
      try {
        if (counterfactual) {
          auto r = pipeline.run_counterfactual_pipeline(episode);
          for (auto& e : r.episodes) {
            const int score = e.score;
            outcome.reasoning.emplace_back(e.id, r.verdicts.count(score) ? r.verdicts.at(score).reasoning_text : "");
            outcome.children.push_back(std::move(e));
          }
          outcome.failed = outcome.failed || r.ladder.status == LadderStatus::kFailed;
        }
        if (clipping) {
          auto r = pipeline.run_clip_pipeline(episode, media);
          std::map<int, std::string> by_score;
          for (const auto& v : r.verdicts) by_score[v.provided_score] = v.reasoning_text;
          for (auto& e : r.episodes) {
            outcome.reasoning.emplace_back(e.id, by_score[e.score]);
            outcome.children.push_back(std::move(e));
          }
        }
      } catch (const Error& ex) {
        if (ex.kind() == ErrorKind::kConfig || ex.kind() == ErrorKind::kIo) {
          std::lock_guard lock(mu);
          if (!fatal) fatal = std::current_exception();
          return;
        }
        outcome.failed = true;
        env.logger.error("episode_failed", {{"episode_id", episode.id}, {"error", ex.what()}});
      }
    }
  };
  const int workers = std::max(1, a.workers > 0 ? a.workers : env.config.gateway.max_in_flight);
  std::vector<std::thread> pool;
  for (int i = 1; i < workers && static_cast<std::size_t>(i) < candidates.size(); ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  log_gateway(env.logger, *gateway);
  if (fatal) std::rethrow_exception(fatal);
  if (env.cancelled()) {
    env.out << "interrupted; finished ladders are kept under " << env.config.paths.work_root.string()
            << "/transcripts, rerun to resume\n";
    return kInterrupted;
  }

  std::vector<Episode> merged;
  std::string review;
  std::size_t added = 0, failed = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    merged.push_back(episodes[i]);
    failed += outcomes[i].failed ? 1 : 0;
    for (std::size_t k = 0; k < outcomes[i].children.size(); ++k) {
      const auto& child = outcomes[i].children[k];
      merged.push_back(child);
      ++added;
      review += json({{"episode", to_json(child)},
                      {"validator_reasoning", outcomes[i].reasoning[k].second},
                      {"config_digest", env.digest}})
                    .dump() +
                "\n";
    }
  }
  write_episodes(a.out, merged, env.digest);
  auto review_path = fs::path(a.out);
  review_path += ".review.jsonl";
  write_file_atomic(review_path, review);
  env.out << json({{"input", episodes.size()},
                   {"candidates", candidates.size()},
                   {"added", added},
                   {"failed_ladders", failed},
                   {"review_items", review_path.string()}})
                 .dump()
          << "\n";
  return 0;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
  std::string db = "work/verify.sqlite";
  std::string in;
  std::string review;
  std::string split = "test";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  int lease_minutes = 15;
  std::optional<std::size_t> target;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_verify_enqueue(Env& env, const VerifyArgs& a) {
  std::map<std::string, std::string> reasoning;
  if (!a.review.empty()) {
    for (const auto& line : read_lines(a.review)) {
      const auto j = json::parse(line);
      const auto item = review_item_from_json(j);
      reasoning[item.episode.id] = item.validator_reasoning;
    }
  }
  std::optional<Split> only;
  if (a.split != "all") only = parse_split(a.split);
  std::vector<ReviewItem> items;
  for (auto& e : read_episodes(a.in)) {
    if (only && e.split != only) continue;
    ReviewItem item;
    if (auto it = reasoning.find(e.id); it != reasoning.end()) item.validator_reasoning = it->second;
    item.episode = std::move(e);
    items.push_back(std::move(item));
  }
  VerifyStore store(a.db, system_clock(), Clock::duration(std::int64_t{a.lease_minutes} * 60000), env.logger);
  const auto r = store.enqueue(items);
  env.out << json({{"added", r.added}, {"skipped", r.skipped}}).dump() << "\n";
  return 0;
}

int cmd_verify_serve(Env& env, const VerifyArgs& a) {
  if (a.lease_minutes < 1) throw Error(ErrorKind::kConfig, "--lease-minutes must be positive");
  VerifyStore store(a.db, system_clock(), Clock::duration(std::int64_t{a.lease_minutes} * 60000), env.logger);
  VerifyServer server(store, {a.host, a.port, a.static_dir}, env.logger);
  const int port = server.start();
  env.out << "listening on http://" << a.host << ":" << port << "/v1/\n" << std::flush;
  while (!env.cancelled()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  env.out << "stopped\n";
  return 0;
}

int cmd_verify_export(Env& env, const VerifyArgs& a) {
  VerifyStore store(a.db, system_clock(), kDefaultLeaseTimeout, env.logger);
  const auto episodes = store.export_verified(parse_split(a.split), a.target, a.seed);
  write_episodes(a.out, episodes, env.digest);
  env.out << json({{"exported", episodes.size()}, {"split", a.split}}).dump() << "\n";
  return 0;
}

// ---- eval / leaderboard ---------------------------------------------------

struct EvalArgs {
  std::string in;
  std::string out_dir = "leaderboard";
  std::string models;
  std::string format = "all";
};

std::vector<LeaderboardFormat> formats_for(const std::string& name) {
  if (name == "all") return {LeaderboardFormat::kJson, LeaderboardFormat::kCsv, LeaderboardFormat::kMarkdown};
  return {parse_leaderboard_format(name)};
}

void write_board(Env& env, const Leaderboard& board, const fs::path& out_dir, const std::string& format) {
  for (auto f : formats_for(format)) {
    const auto path = out_dir / ("leaderboard." + std::string(extension_for(f)));
    std::string doc = emit_leaderboard(board, f);
    // The markdown and csv documents carry the digest in a trailing comment line.
    if (f == LeaderboardFormat::kMarkdown) doc += "\n<!-- config_digest: " + board.config_digest + " -->\n";
    if (f == LeaderboardFormat::kCsv) doc += "# config_digest: " + board.config_digest + "\n";
    write_file_atomic(path, doc);
    env.out << "wrote " << path.string() << "\n";
  }
}

void write_subset_csv(const fs::path& path, const std::map<std::string, std::vector<SubsetResult>>& per_model) {
  std::string doc = "model_id,subset,n,mae,parse_failure_rate\n";
  char buf[64];
  for (const auto& [model, results] : per_model) {
    for (const auto& r : results) {
      std::snprintf(buf, sizeof buf, ",%lld,%.17g,%.17g\n", static_cast<long long>(r.n), r.mae, r.parse_failure_rate);
      doc += model + "," + r.subset + buf;
    }
  }
  write_file_atomic(path, doc);
}

std::vector<Episode> test_split(const std::vector<Episode>& all, Logger& logger) {
  std::vector<Episode> out;
  for (const auto& e : all) {
    if (e.split == Split::kTest) out.push_back(e);
  }
  if (out.size() != all.size()) logger.info("benchmark_filtered", {{"kept", out.size()}, {"input", all.size()}});
  if (out.empty()) throw Error(ErrorKind::kValidation, "benchmark has no test-split episodes");
  return out;
}

int cmd_eval(Env& env, const EvalArgs& a) {
  auto models = a.models.empty() ? env.config.eval.models : split_list(a.models);
  if (models.empty()) throw Error(ErrorKind::kConfig, "no models to evaluate (eval.models or --models)");
  const auto benchmark = test_split(read_episodes(a.in), env.logger);
  const fs::path out_dir = a.out_dir;

  auto gateway = make_gateway(env.config, env.logger);
  MediaOps media(env.config.encoder, env.logger);
  MediaFrameSource frames(media, env.config.paths.work_root, env.config.pipeline.frame_rate_hz);
  EvalHarness harness(*gateway, env.config.templates(), frames, out_dir / "archives", system_clock(), env.logger);

  std::map<std::string, std::vector<SubsetResult>> per_model;
  for (const auto& model : models) {
    EvalJob job;
    job.model_profile = env.config.provider(model);
    job.benchmark = benchmark;
    job.concurrency = env.config.eval.concurrency;
    job.require_verified = env.config.eval.require_verified;
    job.cancel = env.cancel;
    std::vector<Prediction> predictions;
    try {
      predictions = harness.evaluate_model(job);
    } catch (const Error&) {
      if (env.cancelled()) {
        log_gateway(env.logger, *gateway);
        env.out << "interrupted; partial archives kept under " << (out_dir / "archives").string()
                << ", rerun to resume\n";
        return kInterrupted;
      }
      throw;
    }
    auto results = subset_mae(predictions, benchmark, env.logger);
    if (results.empty()) {
      env.logger.warn("model_without_scores", {{"model_id", model}});
      continue;
    }
    per_model[model] = std::move(results);
  }
  log_gateway(env.logger, *gateway);
  if (per_model.empty()) throw Error(ErrorKind::kValidation, "no model produced a scored prediction");

  std::vector<std::string> order;
  std::set<std::string, std::less<>> seen;
  for (const auto& e : benchmark) {
    if (seen.insert(e.source_dataset).second) order.push_back(e.source_dataset);
  }
  std::vector<std::string> present;
  for (const auto& s : order) {
    for (const auto& [m, rs] : per_model) {
      if (std::any_of(rs.begin(), rs.end(), [&](const SubsetResult& r) { return r.subset == s; })) {
        present.push_back(s);
        break;
      }
    }
  }
  write_subset_csv(out_dir / "subset_results.csv", per_model);
  const auto board = aggregate(per_model, present, env.digest, leaderboard_timestamp());
  write_board(env, board, out_dir, a.format);
  return 0;
}

struct LeaderboardArgs {
  std::string from_csv;
  std::string archives;
  std::string benchmark;
  std::string out_dir = "leaderboard";
  std::string format = "all";
};

int cmd_leaderboard(Env& env, const LeaderboardArgs& a) {
  std::map<std::string, std::vector<SubsetResult>> per_model;
  std::vector<std::string> order;
  if (!a.from_csv.empty()) {
    per_model = read_subset_results_csv(a.from_csv);
    order = subset_order_of_csv(a.from_csv);
  } else {
    if (a.archives.empty() || a.benchmark.empty()) {
      throw Error(ErrorKind::kConfig, "give --from-csv, or --archives with --benchmark");
    }
    const auto benchmark = test_split(read_episodes(a.benchmark), env.logger);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(a.archives)) {
      const auto name = entry.path().filename().string();
      if (name.size() > 18 && name.ends_with(".predictions.jsonl")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto predictions = EvalHarness::read_archive(f);
      if (predictions.empty()) continue;
      auto results = subset_mae(predictions, benchmark, env.logger);
      if (!results.empty()) per_model[predictions.front().model_id] = std::move(results);
    }
    if (per_model.empty()) throw Error(ErrorKind::kValidation, "no archives with scored predictions");
  }
  const auto board = aggregate(per_model, order, env.digest, leaderboard_timestamp());
  write_board(env, board, a.out_dir, a.format);
  env.out << emit_leaderboard(board, LeaderboardFormat::kMarkdown);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const std::atomic<bool>* cancel) {
  CLI::App app{"rewardkit: reward-model dataset and benchmark toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::string log_level = "info";
  app.add_option("-c,--config", config_path, "Run config (JSON)");
  app.add_option("--log-level", log_level, "debug, info, warn or error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Load, subsample and normalize source manifests");
  c_ingest->add_option("manifests", ingest.manifests, "Manifest files")->required();
  c_ingest->add_option("-o,--out", ingest.out, "Episode manifest to write")->required();
  c_ingest->add_option("--cap", ingest.cap, "Per-source subsample cap (default 1200)");
  c_ingest->add_option("--seed", ingest.seed, "Subsample seed");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Assign task-disjoint train/val/test splits");
  c_split->add_option("-i,--in", split.in, "Episode manifest")->required();
  c_split->add_option("-o,--out", split.out, "Manifest with splits assigned")->required();
  c_split->add_option("--seed", split.seed, "Overrides the configured split seed");
  c_split->add_flag("--per-source", split.per_source, "Apportion each source dataset separately");

  AugmentArgs augment;
  auto* c_augment = app.add_subcommand("augment", "Generate counterfactual and clipped negatives");
  c_augment->add_option("-i,--in", augment.in, "Split episode manifest")->required();
  c_augment->add_option("-o,--out", augment.out, "Originals plus generated episodes")->required();
  c_augment->add_option("--mode", augment.mode, "counterfactual, clip or both")
      ->check(CLI::IsMember({"counterfactual", "clip", "both"}));
  c_augment->add_flag("--disable-counterfactual", augment.disable_counterfactual, "Skip counterfactual relabeling");
  c_augment->add_flag("--disable-clipping", augment.disable_clipping, "Skip clipped negatives");
  c_augment->add_option("--workers", augment.workers, "Episodes processed concurrently");

  VerifyArgs verify;
  auto* c_enqueue = app.add_subcommand("verify-enqueue", "Queue episodes for human verification");
  c_enqueue->add_option("--db", verify.db, "Review store (default work/verify.sqlite)");
  c_enqueue->add_option("-i,--in", verify.in, "Episode manifest")->required();
  c_enqueue->add_option("--review", verify.review, "Validator reasoning written by augment");
  c_enqueue->add_option("--split", verify.split, "Split to enqueue, or 'all'");
  auto* c_serve = app.add_subcommand("verify-serve", "Serve the verification API");
  c_serve->add_option("--db", verify.db, "Review store (default work/verify.sqlite)");
  c_serve->add_option("--host", verify.host, "Bind address (default 127.0.0.1)");
  c_serve->add_option("--port", verify.port, "Port (default 8080, 0 picks one)");
  c_serve->add_option("--static-dir", verify.static_dir, "Annotation UI build to serve at /");
  c_serve->add_option("--lease-minutes", verify.lease_minutes, "Item lease length (default 15)");
  auto* c_export = app.add_subcommand("verify-export", "Export accepted episodes");
  c_export->add_option("--db", verify.db, "Review store (default work/verify.sqlite)");
  c_export->add_option("--split", verify.split, "Split to export (default test)");
  c_export->add_option("--target", verify.target, "Uniform subsample size");
  c_export->add_option("--seed", verify.seed, "Subsample seed");
  c_export->add_option("-o,--out", verify.out, "Accepted episode manifest")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Score reward models on a benchmark and rank them");
  c_eval->add_option("-i,--in", eval.in, "Benchmark episodes (test split is used)")->required();
  c_eval->add_option("-o,--out-dir", eval.out_dir, "Leaderboard directory (default leaderboard)");
  c_eval->add_option("--models", eval.models, "Comma-separated provider ids");
  c_eval->add_option("--format", eval.format, "json, csv, markdown or all");

  LeaderboardArgs board;
  auto* c_board = app.add_subcommand("leaderboard", "Rebuild a leaderboard from results");
  c_board->add_option("--from-csv", board.from_csv, "model_id,subset,n,mae[,parse_failure_rate] table");
  c_board->add_option("--archives", board.archives, "Directory of prediction archives");
  c_board->add_option("--benchmark", board.benchmark, "Benchmark episodes the archives refer to");
  c_board->add_option("-o,--out-dir", board.out_dir, "Leaderboard directory (default leaderboard)");
  c_board->add_option("--format", board.format, "json, csv, markdown or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int rc = app.exit(ex, out, err);
    return rc == 0 ? 0 : exit_code_for(ErrorKind::kConfig);
  }

  const auto level = log_level == "debug"  ? LogLevel::kDebug
                     : log_level == "warn"  ? LogLevel::kWarn
                     : log_level == "error" ? LogLevel::kError
                                            : LogLevel::kInfo;
  Logger logger(&err, level);
  try {
    Env env{load_or_default(config_path), {}, logger, out, cancel};
    env.digest = env.config.pipeline.config_digest;
    out << "config_digest: " << env.digest << "\n";
    if (c_ingest->parsed()) return cmd_ingest(env, ingest);
    if (c_split->parsed()) return cmd_split(env, split);
    if (c_augment->parsed()) return cmd_augment(env, augment);
    if (c_enqueue->parsed()) return cmd_verify_enqueue(env, verify);
    if (c_serve->parsed()) return cmd_verify_serve(env, verify);
    if (c_export->parsed()) return cmd_verify_export(env, verify);
    if (c_eval->parsed()) return cmd_eval(env, eval);
    if (c_board->parsed()) return cmd_leaderboard(env, board);
  } catch (const Error& ex) {
    logger.error("failed", {{"kind", to_string(ex.kind())}, {"error", ex.what()}});
    return exit_code_for(ex.kind());
  } catch (const std::exception& ex) {
    logger.error("failed", {{"kind", "internal"}, {"error", ex.what()}});
    return 1;
  }
  return 1;
}

}  // namespace rewardkit::cli
