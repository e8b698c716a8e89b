#include "rewardkit/core_model.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "rewardkit/error.hpp"

namespace rewardkit {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kDemonstration: return "demonstration";
    case Provenance::kOrganic: return "organic";
    case Provenance::kCounterfactual: return "counterfactual";
    case Provenance::kClipped: return "clipped";
  }
  return "?";
}

std::string_view to_string(Perspective perspective) {
  switch (perspective) {
    case Perspective::kExocentric: return "exocentric";
    case Perspective::kEgocentric: return "egocentric";
    case Perspective::kUnknown: return "unknown";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorKind::kValidation, "unknown split '" + std::string(name) + "'");
}

Provenance parse_provenance(std::string_view name) {
  if (name == "demonstration") return Provenance::kDemonstration;
  if (name == "organic") return Provenance::kOrganic;
  if (name == "counterfactual") return Provenance::kCounterfactual;
  if (name == "clipped") return Provenance::kClipped;
  throw Error(ErrorKind::kValidation,
              "unknown provenance '" + std::string(name) + "'");
}

Perspective parse_perspective(std::string_view name) {
  if (name == "exocentric") return Perspective::kExocentric;
  if (name == "egocentric") return Perspective::kEgocentric;
  if (name == "unknown" || name.empty()) return Perspective::kUnknown;
  throw Error(ErrorKind::kValidation,
              "unknown perspective '" + std::string(name) + "'");
}

void check_episode(const Episode& episode) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kValidation,
                "episode '" + episode.id + "': " + what);
  };
  if (episode.id.empty()) fail("empty id");
  if (!is_valid_score(episode.score)) {
    fail("score " + std::to_string(episode.score) + " outside 1..5");
  }
  switch (episode.provenance) {
    case Provenance::kDemonstration:
      if (episode.score != kMaxScore) fail("demonstration must score 5");
      break;
    case Provenance::kCounterfactual:
    case Provenance::kClipped:
      if (episode.score == kMaxScore) fail("augmented episode cannot score 5");
      if (!episode.parent_id) fail("augmented episode without parent");
      break;
    case Provenance::kOrganic:
      break;
  }
}

Rubric::Rubric()
    : levels_{{
          {1, "No Success",
           "Final state shows no goal-relevant change for the command."},
          {2, "Minimal Progress",
           "Final state shows a small but insufficient change toward the goal."},
          {3, "Partial Completion",
           "The final state shows good progress toward the goal but violates "
           "more than one requirement or a major requirement."},
          {4, "Near Completion",
           "Final state is correct in region and intent but misses a single "
           "minor requirement."},
          {5, "Perfect Completion", "Final state satisfies all requirements."},
      }} {}

const Rubric& Rubric::standard() {
  static const Rubric rubric;
  return rubric;
}

const RubricLevel& Rubric::level(int score) const {
  if (!is_valid_score(score)) {
    throw Error(ErrorKind::kRange,
                "rubric score " + std::to_string(score) + " outside 1..5");
  }
  return levels_[static_cast<std::size_t>(score - 1)];
}

std::string Rubric::text() const {
  std::string out =
      "Rubric for end-of-episode progress (judge only the final state without "
      "time limits):";
  for (const auto& level : levels_) {
    out += '\n';
    out += std::to_string(level.score);
    out += " - ";
    out += level.name;
    out += ": ";
    out += level.criterion;
  }
  return out;
}

double mae(std::span<const ScorePair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::kValidation, "no scored pairs");
  long total = 0;
  for (const auto& [predicted, truth] : pairs) {
    if (!is_valid_score(predicted) || !is_valid_score(truth)) {
      throw Error(ErrorKind::kRange, "score pair (" + std::to_string(predicted) +
                                         "," + std::to_string(truth) +
                                         ") outside 1..5");
    }
    total += std::abs(predicted - truth);
  }
  return static_cast<double>(total) / static_cast<double>(pairs.size());
}

int discretize_progress(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw Error(ErrorKind::kRange,
                "progress " + std::to_string(progress) + " outside [0,1]");
  }
  const int bin = static_cast<int>(std::floor(progress * 5.0)) + 1;
  return bin > kMaxScore ? kMaxScore : bin;
}

int map_roboarena_score(int score) {
  if (score < 0 || score > 100) {
    throw Error(ErrorKind::kRange,
                "progress score " + std::to_string(score) + " outside 0..100");
  }
  return discretize_progress(static_cast<double>(score) / 100.0);
}

}  // namespace rewardkit
