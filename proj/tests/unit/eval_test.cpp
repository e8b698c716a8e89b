#include <gtest/gtest.h>

#include <random>

#include "rewardkit/error.hpp"
#include "rewardkit/eval.hpp"
#include "test_support.hpp"

using namespace rewardkit;
using namespace rewardkit::testing;
using nlohmann::json;
namespace fs = std::filesystem;

TEST(ParsePrediction, ScoreMarkerWins) {
  EXPECT_EQ(parse_prediction("The cup is on the plate but tipped over.\nSCORE: 1"), 1);
  EXPECT_EQ(parse_prediction("Three of four steps done. SCORE: 4"), 4);
  EXPECT_EQ(parse_prediction("SCORE: 2 ... on reflection SCORE: 3"), 3);
  EXPECT_EQ(parse_prediction("Looks like a 2 but SCORE: 5"), 5);
}

TEST(ParsePrediction, StandaloneFallback) {
  EXPECT_EQ(parse_prediction("I rate this 4 out of 5."), 4);
  EXPECT_EQ(parse_prediction("4/5"), 4);
  EXPECT_EQ(parse_prediction("On a 1-5 scale: 3"), 3);
  EXPECT_EQ(parse_prediction("Score 2."), 2);
  EXPECT_EQ(parse_prediction("5"), 5);
}

TEST(ParsePrediction, NothingUsable) {
  EXPECT_EQ(parse_prediction("No discernible progress."), std::nullopt);
  EXPECT_EQ(parse_prediction(""), std::nullopt);
  EXPECT_EQ(parse_prediction("SCORE: 7"), std::nullopt);
  EXPECT_EQ(parse_prediction("It took 12 seconds"), std::nullopt);
  EXPECT_EQ(parse_prediction("roughly 3.5"), std::nullopt);
  EXPECT_EQ(parse_prediction("0"), std::nullopt);
  EXPECT_EQ(parse_prediction("step2 of the plan"), std::nullopt);
  EXPECT_EQ(parse_prediction("out of 5"), std::nullopt);
}

TEST(ParsePrediction, NeverOutsideRange) {
  std::mt19937 rng(7);
  const std::string alphabet = "0123456789 SCORE:/-.outf\nabc";
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const int len = static_cast<int>(rng() % 40);
    for (int j = 0; j < len; ++j) s += alphabet[rng() % alphabet.size()];
    auto v = parse_prediction(s);
    if (v) {
      EXPECT_GE(*v, 1) << s;
      EXPECT_LE(*v, 5) << s;
    }
    EXPECT_EQ(parse_prediction(s), v);  // pure
  }
}

namespace {

Episode bench_episode(const std::string& id, const std::string& task, int score,
                      const std::string& subset = "Berkeley Bridge") {
  Episode e = demo_episode(id, task);
  e.score = score;
  e.split = Split::kTest;
  e.source_dataset = subset;
  e.provenance = Provenance::kOrganic;
  return e;
}

json by_task(std::vector<std::pair<std::string, json>> replies) {
  json rules = json::array();
  for (auto& [task, r] : replies) {
    rules.push_back({{"pattern", "Task description: " + task + "\n"}, {"responses", r}});
  }
  return {{"rules", rules}};
}

GatewayOptions quick_retries() {
  GatewayOptions o;
  o.max_attempts = 2;
  return o;
}

struct EvalRig {
  explicit EvalRig(const json& script)
      : gw(quick_retries(), clock),
        profile(gw.mock_provider(MockScript::from_json(script), "judge")),
        frames(dir.path()),
        harness(gw, TemplateSet::builtin(), frames, dir / "archive", clock) {}

  EvalJob job(std::vector<Episode> bench, int concurrency = 1) const {
    EvalJob j;
    j.model_profile = profile;
    j.benchmark = std::move(bench);
    j.concurrency = concurrency;
    return j;
  }

  TempDir dir;
  SimulatedClock clock;
  Gateway gw;
  ProviderProfile profile;
  FakeFrames frames;
  EvalHarness harness;
};

std::vector<Episode> three() {
  return {bench_episode("a", "open the drawer", 5), bench_episode("b", "close the drawer", 2),
          bench_episode("c", "wipe the table", 4)};
}

json three_script() {
  return by_task({{"open the drawer", {"Drawer open.\nSCORE: 5"}},
                  {"close the drawer", {"Barely moved, 2 out of 5"}},
                  {"wipe the table", {"Hmm."}}});
}

// Trips the cancel flag once `after` samples have been taken.
class CancelAfter final : public FrameSource {
 public:
  CancelAfter(FrameSource& inner, std::atomic<bool>& flag, int after) : inner_(inner), flag_(flag), after_(after) {}
  FrameSample frames_for(const std::string& key, const std::string& ref, int max_frames) override {
    if (++seen_ >= after_) flag_ = true;
    return inner_.frames_for(key, ref, max_frames);
  }

 private:
  FrameSource& inner_;
  std::atomic<bool>& flag_;
  int after_;
  std::atomic<int> seen_{0};
};

}  // namespace

TEST(EvaluateModel, OnePredictionPerEpisodeInOrder) {
  EvalRig rig(three_script());
  auto preds = rig.harness.evaluate_model(rig.job(three()));
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].episode_id, "a");
  EXPECT_EQ(preds[0].parsed_score, 5);
  EXPECT_FALSE(preds[0].parse_failed);
  EXPECT_EQ(preds[1].parsed_score, 2);
  EXPECT_EQ(preds[2].parsed_score, std::nullopt);
  EXPECT_TRUE(preds[2].parse_failed);
  EXPECT_EQ(preds[2].raw_text, "Hmm.");
  for (const auto& p : preds) {
    EXPECT_EQ(p.model_id, "judge");
    EXPECT_EQ(p.status, "ok");
  }

  const auto archive = EvalHarness::archive_path(rig.dir / "archive", "judge");
  EXPECT_TRUE(fs::exists(archive));
  EXPECT_FALSE(fs::exists(archive.string() + ".partial"));
  EXPECT_EQ(EvalHarness::read_archive(archive), preds);
  auto records = Transcript::read(archive);
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records[0]["type"], "header");
  EXPECT_EQ(records[1]["prompt"], rig.harness.render_prompt(three()[0]));
  EXPECT_EQ(records[1]["frames"].size(), 4u);
}

TEST(EvaluateModel, PromptCarriesTaskAndRubric) {
  EvalRig rig(three_script());
  const auto prompt = rig.harness.render_prompt(three()[0]);
  EXPECT_NE(prompt.find("Task description: open the drawer\n"), std::string::npos);
  EXPECT_NE(prompt.find(Rubric::standard().text()), std::string::npos);
  EXPECT_EQ(prompt.find('{'), std::string::npos);
}

TEST(EvaluateModel, ProviderFailuresArchivedNotFatal) {
  EvalRig rig(by_task({{"open the drawer", {{{"timeout", true}}, {{"timeout", true}}}},
                       {"close the drawer", {{{"http_status", 400}}}},
                       {"wipe the table", {"SCORE: 3"}}}));
  auto preds = rig.harness.evaluate_model(rig.job(three()));
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].status, "timeout");
  EXPECT_TRUE(preds[0].parse_failed);
  EXPECT_EQ(preds[1].status, "provider_error");
  EXPECT_TRUE(preds[1].parse_failed);
  EXPECT_EQ(preds[2].parsed_score, 3);
  auto records = Transcript::read(EvalHarness::archive_path(rig.dir / "archive", "judge"));
  EXPECT_FALSE(records[1].value("error", "").empty());
}

TEST(EvaluateModel, LatencyIsTheLastRoundTrip) {
  // The retry backoff advances the simulated clock but is not latency.
  EvalRig rig(by_task({{"open the drawer", {{{"http_status", 503}}, {{"text", "SCORE: 5"}, {"latency_ms", 840}}}},
                       {"close the drawer", {"SCORE: 2"}},
                       {"wipe the table", {{{"text", "SCORE: 4"}, {"latency_ms", 15}}}}}));
  auto preds = rig.harness.evaluate_model(rig.job(three()));
  EXPECT_EQ(preds[0].latency_ms, 840);
  EXPECT_EQ(preds[1].latency_ms, 0);
  EXPECT_EQ(preds[2].latency_ms, 15);
  EXPECT_GT(rig.clock.now().time_since_epoch().count(), 0);
}

TEST(EvaluateModel, MediaFailureIsRecorded) {
  EvalRig rig(three_script());
  rig.frames.drop_final.push_back("b");
  auto preds = rig.harness.evaluate_model(rig.job(three()));
  EXPECT_EQ(preds[1].status, "media_error");
  EXPECT_TRUE(preds[1].parse_failed);
  EXPECT_EQ(rig.gw.stats().calls, 2);
}

TEST(EvaluateModel, FinishedArchiveResumesWithoutCalls) {
  EvalRig rig(three_script());
  auto first = rig.harness.evaluate_model(rig.job(three()));
  const auto calls = rig.gw.stats().calls;
  auto second = rig.harness.evaluate_model(rig.job(three()));
  EXPECT_EQ(rig.gw.stats().calls, calls);
  EXPECT_EQ(first, second);
}

TEST(EvaluateModel, CancelThenResume) {
  EvalRig rig(three_script());
  std::atomic<bool> cancel{false};
  CancelAfter cancelling(rig.frames, cancel, 1);
  EvalHarness harness(rig.gw, TemplateSet::builtin(), cancelling, rig.dir / "archive", rig.clock);
  auto job = rig.job(three());
  job.cancel = &cancel;
  try {
    harness.evaluate_model(job);
    FAIL() << "expected interruption";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kStage);
    EXPECT_NE(std::string(e.what()).find("interrupted after 1 of 3"), std::string::npos);
  }
  const auto archive = EvalHarness::archive_path(rig.dir / "archive", "judge");
  EXPECT_FALSE(fs::exists(archive));
  EXPECT_TRUE(fs::exists(archive.string() + ".partial"));
  EXPECT_EQ(rig.gw.stats().calls, 1);

  auto preds = rig.harness.evaluate_model(rig.job(three()));
  EXPECT_EQ(rig.gw.stats().calls, 3);  // only the two unfinished episodes
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].parsed_score, 5);
  EXPECT_EQ(preds[1].parsed_score, 2);
  EXPECT_FALSE(fs::exists(archive.string() + ".partial"));
}

TEST(EvaluateModel, ConcurrencyDoesNotChangeResults) {
  std::vector<Episode> bench;
  std::vector<std::pair<std::string, json>> replies;
  for (int i = 0; i < 20; ++i) {
    const auto task = "move block " + std::to_string(i) + " left";
    bench.push_back(bench_episode("e" + std::to_string(i), task, 1 + i % 5));
    replies.push_back({task, {"SCORE: " + std::to_string(1 + (i * 3) % 5)}});
  }
  EvalRig serial(by_task(replies));
  EvalRig parallel(by_task(replies));
  auto a = serial.harness.evaluate_model(serial.job(bench, 1));
  auto b = parallel.harness.evaluate_model(parallel.job(bench, 4));
  EXPECT_EQ(a, b);
  EXPECT_EQ(read_text(EvalHarness::archive_path(serial.dir / "archive", "judge")),
            read_text(EvalHarness::archive_path(parallel.dir / "archive", "judge")));
}

TEST(EvaluateModel, Preconditions) {
  EvalRig rig(three_script());
  auto bench = three();
  bench[1].split = Split::kTrain;
  EXPECT_THROW(rig.harness.evaluate_model(rig.job(bench)), Error);
  bench = three();
  bench[2].id = "a";
  EXPECT_THROW(rig.harness.evaluate_model(rig.job(bench)), Error);
  auto job = rig.job(three());
  job.require_verified = true;
  try {
    rig.harness.evaluate_model(job);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  }
  job = rig.job(three(), 0);
  EXPECT_THROW(rig.harness.evaluate_model(job), Error);
  EXPECT_EQ(rig.gw.stats().calls, 0);
}

TEST(SubsetMae, Example) {
  std::vector<Episode> eps = {bench_episode("x", "t1", 5, "S"), bench_episode("y", "t2", 5, "S")};
  std::vector<Prediction> preds(2);
  preds[0] = {"m", "x", "SCORE: 1", 1, false, 0, "ok"};
  preds[1] = {"m", "y", "SCORE: 5", 5, false, 0, "ok"};
  auto out = subset_mae(preds, eps);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].subset, "S");
  EXPECT_EQ(out[0].n, 2);
  EXPECT_DOUBLE_EQ(out[0].mae, 2.0);
  EXPECT_DOUBLE_EQ(out[0].parse_failure_rate, 0.0);
}

TEST(SubsetMae, ParseFailuresExcludedAndCounted) {
  std::vector<Episode> eps;
  std::vector<Prediction> preds;
  double abs_sum = 0;
  for (int i = 0; i < 10; ++i) {
    const int truth = 1 + i % 5;
    eps.push_back(bench_episode("e" + std::to_string(i), "t", truth, "RoboArena"));
    Prediction p;
    p.model_id = "m";
    p.episode_id = eps.back().id;
    if (i == 3 || i == 7) {
      p.parse_failed = true;
    } else {
      p.parsed_score = 1 + (i * 2) % 5;
      p.parse_failed = false;
      abs_sum += std::abs(*p.parsed_score - truth);
    }
    preds.push_back(p);
  }
  auto out = subset_mae(preds, eps);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].n, 8);
  EXPECT_DOUBLE_EQ(out[0].parse_failure_rate, 0.2);
  EXPECT_DOUBLE_EQ(out[0].mae, abs_sum / 8.0);
}

TEST(SubsetMae, GroupsInEpisodeOrderAndDropsEmpty) {
  std::vector<Episode> eps = {bench_episode("1", "t", 3, "B"), bench_episode("2", "t", 3, "A"),
                              bench_episode("3", "t", 3, "C")};
  std::vector<Prediction> preds(3);
  preds[0] = {"m", "2", "", 1, false, 0, "ok"};
  preds[1] = {"m", "1", "", 4, false, 0, "ok"};
  preds[2] = {"m", "3", "", std::nullopt, true, 0, "ok"};
  auto out = subset_mae(preds, eps);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].subset, "B");
  EXPECT_DOUBLE_EQ(out[0].mae, 1.0);
  EXPECT_EQ(out[1].subset, "A");
  EXPECT_DOUBLE_EQ(out[1].mae, 2.0);

  preds[0].episode_id = "ghost";
  EXPECT_THROW(subset_mae(preds, eps), Error);
}
